//! Dense SVD helpers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative threshold (× σ₁) below which a singular value counts as zero.
pub const EFFECTIVE_RANK_RTOL: f64 = 1e-9;

/// Leading `r` singular triplets, singular values in non-increasing order.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (k, s) in self.sigma.iter().enumerate() {
            us.column_mut(k).scale_mut(*s);
        }
        us * self.v.transpose()
    }
}

/// Full thin SVD with singular values sorted in non-increasing order.
pub fn thin_svd(m: &DMatrix<f64>) -> Result<TruncatedSvd> {
    let k = m.nrows().min(m.ncols());
    truncated_svd(m, k)
}

/// Best rank-`r` approximation factors of `m` (Golub–Kahan SVD).
pub fn truncated_svd(m: &DMatrix<f64>, r: usize) -> Result<TruncatedSvd> {
    let k = m.nrows().min(m.ncols());
    if r == 0 || r > k {
        return Err(Error::Config(format!(
            "truncation rank {r} must be in 1..={k} for a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("SVD input has non-finite entries".into()));
    }
    let svd = nalgebra::linalg::SVD::try_new(m.clone(), true, true, f64::EPSILON, 10_000)
        .ok_or_else(|| {
            Error::Numerical(format!(
                "SVD of {}x{} matrix did not converge within 10000 iterations",
                m.nrows(),
                m.ncols()
            ))
        })?;
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let order = &order[..r];
    Ok(TruncatedSvd {
        u: DMatrix::from_fn(m.nrows(), r, |i, c| u[(i, order[c])]),
        sigma: DVector::from_fn(r, |c, _| svd.singular_values[order[c]]),
        v: DMatrix::from_fn(m.ncols(), r, |j, c| v_t[(order[c], j)]),
    })
}

/// Singular values in non-increasing order.
pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    DVector::from_vec(s)
}

/// Number of singular values above `EFFECTIVE_RANK_RTOL × σ₁`.
pub fn effective_rank(m: &DMatrix<f64>) -> usize {
    let s = singular_values(m);
    match s.iter().next() {
        Some(&s1) if s1 > 0.0 => s.iter().filter(|&&x| x > EFFECTIVE_RANK_RTOL * s1).count(),
        _ => 0,
    }
}

/// Orthogonal projection onto the leading rank-`r` subspace, computed from the
/// eigendecomposition of the smaller Gram matrix. Agrees with the truncated
/// SVD reconstruction whenever σ_r > σ_{r+1}; used in the solver's inner loop.
pub fn rank_projection(m: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    rank_projection_into(m, r, &mut out);
    out
}

/// [`rank_projection`] writing into a preallocated matrix of the same shape.
pub fn rank_projection_into(m: &DMatrix<f64>, r: usize, out: &mut DMatrix<f64>) {
    let (n, p) = m.shape();
    assert_eq!(out.shape(), (n, p));
    if r >= n.min(p) {
        out.copy_from(m);
        return;
    }
    if r == 0 {
        out.fill(0.0);
        return;
    }
    let tall = n >= p;
    // the transposed product goes through the blocked kernel; tr_mul does not
    let gram = if tall {
        m.transpose() * m
    } else {
        m * m.transpose()
    };
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let basis = DMatrix::from_fn(eig.eigenvectors.nrows(), r, |i, c| {
        eig.eigenvectors[(i, order[c])]
    });
    let projector = &basis * basis.transpose();
    if tall {
        out.gemm(1.0, m, &projector, 0.0);
    } else {
        out.gemm(1.0, &projector, m, 0.0);
    }
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}
