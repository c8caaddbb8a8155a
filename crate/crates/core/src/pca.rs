//! PCA baseline: LOD/√2 imputation, centered SVD, cumulative-variance rule.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::data::{EntryStatus, MaskedMatrix};
use crate::error::{Error, Result};
use crate::io::{format_f64, write_matrix_csv, write_records};
use crate::linalg::thin_svd;

/// Slack when comparing cumulative shares with the threshold, so that a share
/// of exactly 1.0 is reached despite rounding.
const SHARE_TOL: f64 = 1e-12;

pub const DEFAULT_VARIANCE: f64 = 0.80;

#[derive(Debug, Clone)]
pub struct PcaModel {
    pub means: DVector<f64>,
    /// `p × m` right singular vectors, `m = min(n, p)`.
    pub rotation: DMatrix<f64>,
    /// `n × m` coordinates of the centered data.
    pub scores: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub explained_share: DVector<f64>,
    pub k_selected: usize,
}

impl PcaModel {
    pub fn components(&self) -> usize {
        self.singular_values.len()
    }
}

/// Observed values kept, `BelowLod` replaced by `δ/√2`. `Missing` entries take
/// the mean of the column's other (imputed) entries.
pub fn impute_lod(x: &MaskedMatrix) -> Result<DMatrix<f64>> {
    let (n, p) = x.shape();
    let mut m = x.fill_unobserved(|status, delta| match status {
        EntryStatus::BelowLod => delta / std::f64::consts::SQRT_2,
        _ => 0.0,
    });
    for j in 0..p {
        let available: Vec<f64> = (0..n)
            .filter(|&i| x.status(i, j) != EntryStatus::Missing)
            .map(|i| m[(i, j)])
            .collect();
        if available.len() == n {
            continue;
        }
        if available.is_empty() {
            return Err(Error::InsufficientData(format!(
                "column `{}` has no available entries",
                x.column_names()[j]
            )));
        }
        let mean = available.iter().sum::<f64>() / available.len() as f64;
        for i in 0..n {
            if x.status(i, j) == EntryStatus::Missing {
                m[(i, j)] = mean;
            }
        }
    }
    Ok(m)
}

pub fn fit_pca(m: &DMatrix<f64>, variance_threshold: f64) -> Result<PcaModel> {
    let (n, p) = m.shape();
    if n < 2 || p == 0 {
        return Err(Error::InsufficientData(format!(
            "PCA needs at least 2 rows, got {n}x{p}"
        )));
    }
    if !(variance_threshold > 0.0 && variance_threshold <= 1.0) {
        return Err(Error::Config(format!(
            "variance threshold must lie in (0, 1], got {variance_threshold}"
        )));
    }
    let means = DVector::from_fn(p, |j, _| m.column(j).mean());
    let mut centered = m.clone();
    for (j, mean) in means.iter().enumerate() {
        centered.column_mut(j).add_scalar_mut(-mean);
    }
    let svd = thin_svd(&centered)?;
    let total: f64 = svd.sigma.iter().map(|s| s * s).sum();
    if !(total > 0.0) {
        return Err(Error::Domain("zero total variance after centering".into()));
    }
    let explained_share = svd.sigma.map(|s| s * s / total);
    let mut cumulative = 0.0;
    let mut k_selected = explained_share.len();
    for (k, share) in explained_share.iter().enumerate() {
        cumulative += share;
        if cumulative >= variance_threshold - SHARE_TOL {
            k_selected = k + 1;
            break;
        }
    }
    let scores = &centered * &svd.v;
    Ok(PcaModel {
        means,
        rotation: svd.v,
        scores,
        singular_values: svd.sigma,
        explained_share,
        k_selected,
    })
}

/// Rank-`k` reconstruction with the column means added back.
pub fn reconstruct(model: &PcaModel, k: usize) -> Result<DMatrix<f64>> {
    if k == 0 || k > model.components() {
        return Err(Error::Config(format!(
            "reconstruction rank {k} must be in 1..={}",
            model.components()
        )));
    }
    let mut out = model.scores.columns(0, k) * model.rotation.columns(0, k).transpose();
    for (j, mean) in model.means.iter().enumerate() {
        out.column_mut(j).add_scalar_mut(*mean);
    }
    Ok(out)
}

/// `means.csv`, `rotation.csv`, `scores.csv`, `singular_values.csv` and the
/// selected-rank reconstruction `reconstruction.csv`.
pub fn write_pca(model: &PcaModel, column_names: &[String], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let pcs: Vec<String> = (1..=model.components()).map(|k| format!("pc{k}")).collect();
    let means = DMatrix::from_row_slice(1, model.means.len(), model.means.as_slice());
    write_matrix_csv(&means, column_names, &dir.join("means.csv"))?;
    write_matrix_csv(&model.rotation, &pcs, &dir.join("rotation.csv"))?;
    write_matrix_csv(&model.scores, &pcs, &dir.join("scores.csv"))?;
    let rows: Vec<Vec<String>> = model
        .singular_values
        .iter()
        .zip(model.explained_share.iter())
        .enumerate()
        .map(|(k, (s, share))| vec![(k + 1).to_string(), format_f64(*s), format_f64(*share)])
        .collect();
    write_records(
        &dir.join("singular_values.csv"),
        &["component", "singular_value", "explained_share"],
        &rows,
    )?;
    write_matrix_csv(
        &reconstruct(model, model.k_selected)?,
        column_names,
        &dir.join("reconstruction.csv"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;

    fn masked(
        values: &[f64],
        status: &[EntryStatus],
        delta: &[f64],
        n: usize,
        p: usize,
    ) -> MaskedMatrix {
        MaskedMatrix::new(
            DMatrix::from_row_slice(n, p, values),
            DMatrix::from_row_slice(n, p, status),
            DMatrix::from_row_slice(n, p, delta),
            crate::data::default_column_names(p),
        )
        .unwrap()
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn imputation_examples() {
        use EntryStatus::*;
        let x = masked(
            &[1.0, f64::NAN, 3.0, f64::NAN],
            &[Observed, BelowLod, Observed, BelowLod],
            &[0.0, 2.0, 0.0, 0.5],
            2,
            2,
        );
        let m = impute_lod(&x).unwrap();
        assert_eq!(m[(0, 0)], 1.0);
        assert!((m[(0, 1)] - 1.41421356).abs() < 1e-8);
        assert!((m[(1, 1)] - 0.35355339).abs() < 1e-8);
        assert_eq!(m[(0, 1)], 2.0 / 2f64.sqrt());

        let plain = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(
            impute_lod(&MaskedMatrix::fully_observed(plain.clone()).unwrap()).unwrap(),
            plain
        );
    }

    #[test]
    fn missing_takes_column_mean() {
        use EntryStatus::*;
        let x = masked(
            &[1.0, 0.0, f64::NAN, 0.0, 5.0, 0.0],
            &[Observed, Observed, Missing, Observed, Observed, Observed],
            &[0.0; 6],
            3,
            2,
        );
        assert_eq!(impute_lod(&x).unwrap()[(1, 0)], 3.0);
    }

    #[test]
    fn line_through_centroid_needs_one_component() {
        let m = DMatrix::from_fn(6, 3, |i, j| 1.0 + i as f64 * [1.0, -2.0, 0.5][j]);
        let model = fit_pca(&m, DEFAULT_VARIANCE).unwrap();
        assert_eq!(model.k_selected, 1);
        assert!((model.explained_share[0] - 1.0).abs() < 1e-12);
    }

    /// Centered 4×3 matrix with singular values (3, 1, 0).
    fn three_one_zero() -> DMatrix<f64> {
        let s2 = 0.5f64.sqrt();
        let u = DMatrix::from_column_slice(
            4,
            3,
            &[s2, -s2, 0.0, 0.0, 0.0, 0.0, s2, -s2, 0.5, 0.5, -0.5, -0.5],
        );
        let sigma = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 0.0]));
        u * sigma
    }

    #[test]
    fn ninety_percent_first_share_selects_one() {
        let m = three_one_zero().add_scalar(5.0);
        let model = fit_pca(&m, 0.8).unwrap();
        assert!((model.singular_values[0] - 3.0).abs() < 1e-12);
        assert!((model.explained_share[0] - 0.9).abs() < 1e-12);
        assert!((model.explained_share[1] - 0.1).abs() < 1e-12);
        assert_eq!(model.k_selected, 1);
        assert_eq!(fit_pca(&m, 0.95).unwrap().k_selected, 2);
    }

    #[test]
    fn share_exactly_at_threshold_counts() {
        // shares (0.8, 0.2)
        let s2 = 0.5f64.sqrt();
        let m =
            DMatrix::from_column_slice(4, 2, &[2.0 * s2, -2.0 * s2, 0.0, 0.0, 0.0, 0.0, s2, -s2]);
        assert_eq!(fit_pca(&m, 0.8).unwrap().k_selected, 1);
    }

    #[test]
    fn full_threshold_keeps_every_informative_component() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let m = DMatrix::from_fn(7, 4, |_, _| rng.random::<f64>());
        assert_eq!(fit_pca(&m, 1.0).unwrap().k_selected, 4);
        let wide = DMatrix::from_fn(3, 5, |_, _| rng.random::<f64>());
        assert_eq!(fit_pca(&wide, 1.0).unwrap().k_selected, 2);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(fit_pca(&DMatrix::from_element(4, 3, 2.0), 0.8).is_err());
        assert!(fit_pca(&DMatrix::from_element(1, 3, 2.0), 0.8).is_err());
        let m = three_one_zero();
        assert!(fit_pca(&m, 0.0).is_err());
        let model = fit_pca(&m, 0.8).unwrap();
        assert!(reconstruct(&model, 0).is_err());
        assert!(reconstruct(&model, 4).is_err());
    }

    /// Best rank-k approximation of the centered matrix from the eigenvectors
    /// of its Gram matrix, plus the means.
    fn eckart_young(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
        let means: Vec<f64> = (0..m.ncols()).map(|j| m.column(j).mean()).collect();
        let c = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] - means[j]);
        let eig = SymmetricEigen::new(c.transpose() * &c);
        let mut order: Vec<usize> = (0..m.ncols()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let v = DMatrix::from_fn(m.ncols(), k, |i, c| eig.eigenvectors[(i, order[c])]);
        let approx = &c * &v * v.transpose();
        DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| approx[(i, j)] + means[j])
    }

    proptest! {
        #[test]
        fn reconstruction_matches_eckart_young(values in prop::collection::vec(-5.0f64..5.0, 24), k in 1usize..=4) {
            let m = DMatrix::from_row_slice(6, 4, &values);
            let model = fit_pca(&m, 0.8).unwrap();
            let gaps: Vec<f64> = model.singular_values.iter().zip(model.singular_values.iter().skip(1)).map(|(a, b)| a - b).collect();
            // the subspace is only unique when σ_k > σ_{k+1}
            prop_assume!(k == 4 || gaps[k - 1] > 1e-3);
            let ours = reconstruct(&model, k).unwrap();
            prop_assert!((ours - eckart_young(&m, k)).amax() < 1e-10);
        }

        #[test]
        fn pca_model_invariants(values in prop::collection::vec(0.0f64..10.0, 40), threshold in 0.05f64..=1.0) {
            let m = DMatrix::from_row_slice(8, 5, &values);
            let model = fit_pca(&m, threshold).unwrap();
            let eye = DMatrix::<f64>::identity(5, 5);
            prop_assert!((model.rotation.tr_mul(&model.rotation) - eye).amax() < 1e-10);
            for w in model.singular_values.as_slice().windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
            let cum: Vec<f64> = model.explained_share.iter().scan(0.0, |acc, s| { *acc += s; Some(*acc) }).collect();
            prop_assert!(cum[model.k_selected - 1] >= threshold - SHARE_TOL);
            if model.k_selected > 1 {
                prop_assert!(cum[model.k_selected - 2] < threshold - SHARE_TOL);
            }
            let full = reconstruct(&model, 5).unwrap();
            prop_assert!((full - &m).amax() < 1e-10);
            let errs: Vec<f64> = (1..=5).map(|k| (reconstruct(&model, k).unwrap() - &m).norm()).collect();
            for w in errs.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-10);
            }
        }

        #[test]
        fn imputed_lod_stays_in_range(deltas in prop::collection::vec(0.01f64..10.0, 12)) {
            let status = DMatrix::from_element(4, 3, EntryStatus::BelowLod);
            let x = MaskedMatrix::new(DMatrix::from_element(4, 3, f64::NAN), status, DMatrix::from_row_slice(4, 3, &deltas), crate::data::default_column_names(3)).unwrap();
            let m = impute_lod(&x).unwrap();
            for i in 0..4 {
                for j in 0..3 {
                    let d = x.delta(i, j);
                    prop_assert!(m[(i, j)] >= 0.0 && m[(i, j)] <= d);
                    prop_assert_eq!(m[(i, j)], d / 2f64.sqrt());
                }
            }
        }
    }

    #[test]
    fn rank_one_centered_data_is_exact() {
        let m = DMatrix::from_fn(5, 3, |i, j| 2.0 + (i as f64 - 2.0) * (j as f64 + 1.0));
        let model = fit_pca(&m, 0.8).unwrap();
        assert!((reconstruct(&model, 1).unwrap() - &m).amax() < 1e-10);
    }
}
