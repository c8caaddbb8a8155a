//! Prediction and subspace error metrics.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{thin_svd, truncated_svd};

/// Singular values closer than this (relative to σ₁) make individual
/// singular vectors ill-defined.
const DEGENERATE_GAP: f64 = 1e-8;

/// `‖T − P‖_F / ‖T‖_F`, over all entries or only where `mask` is true.
pub fn relative_error(
    truth: &DMatrix<f64>,
    pred: &DMatrix<f64>,
    mask: Option<&DMatrix<bool>>,
) -> Result<f64> {
    if truth.shape() != pred.shape() {
        return Err(Error::Shape(format!(
            "truth {}x{} vs prediction {}x{}",
            truth.nrows(),
            truth.ncols(),
            pred.nrows(),
            pred.ncols()
        )));
    }
    if let Some(m) = mask {
        if m.shape() != truth.shape() {
            return Err(Error::Shape("mask does not match truth".into()));
        }
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (idx, (t, p)) in truth.iter().zip(pred.iter()).enumerate() {
        if mask.is_some_and(|m| !m[idx]) {
            continue;
        }
        num += (t - p) * (t - p);
        den += t * t;
    }
    if !(den > 0.0) {
        return Err(Error::UndefinedMetric(
            "truth has zero norm on the selected entries".into(),
        ));
    }
    Ok((num / den).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenvectorError {
    /// Each estimated vector flipped to agree in sign with its counterpart.
    pub sign_aligned: f64,
    /// Estimated basis rotated by the best orthogonal matrix.
    pub procrustes: f64,
    /// Some of the leading `k + 1` singular values of either matrix nearly
    /// coincide, so the per-vector comparison is ambiguous.
    pub degenerate: bool,
}

pub fn eigenvector_error(
    truth: &DMatrix<f64>,
    est: &DMatrix<f64>,
    k: usize,
    side: Side,
) -> Result<EigenvectorError> {
    if truth.shape() != est.shape() {
        return Err(Error::Shape(format!(
            "truth {}x{} vs estimate {}x{}",
            truth.nrows(),
            truth.ncols(),
            est.nrows(),
            est.ncols()
        )));
    }
    let t = truncated_svd(truth, k)?;
    let e = truncated_svd(est, k)?;
    if t.sigma[k - 1] <= 0.0 || e.sigma[k - 1] <= 0.0 {
        return Err(Error::UndefinedMetric(format!(
            "rank of an input is below {k}"
        )));
    }
    let (a, mut b) = match side {
        Side::Left => (t.u, e.u),
        Side::Right => (t.v, e.v),
    };
    let norm = a.norm();

    let cross = b.tr_mul(&a);
    let polar = thin_svd(&cross)?;
    let rotation = &polar.u * polar.v.transpose();
    let procrustes = (&a - &b * rotation).norm() / norm;

    for c in 0..k {
        if a.column(c).dot(&b.column(c)) < 0.0 {
            b.column_mut(c).neg_mut();
        }
    }
    let sign_aligned = (&a - &b).norm() / norm;

    let degenerate = near_ties(truth, k) || near_ties(est, k);
    Ok(EigenvectorError {
        sign_aligned,
        procrustes,
        degenerate,
    })
}

fn near_ties(m: &DMatrix<f64>, k: usize) -> bool {
    let s = crate::linalg::singular_values(m);
    let top = s.len().min(k + 1);
    let scale = s[0].max(f64::MIN_POSITIVE);
    (1..top).any(|i| (s[i - 1] - s[i]) <= DEGENERATE_GAP * scale)
}
