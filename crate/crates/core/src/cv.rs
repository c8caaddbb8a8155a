//! Rank selection by random hold-out of observed entries.
//!
//! Repeat `i` hides the entries drawn with seed `derive_seed(seed, i)`. The
//! same hold-out set is used for every rank in the grid, so ranks are compared
//! on paired splits.

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{sample_sd, EntryStatus, MaskedMatrix};
use crate::error::{Error, Result};
use crate::io::{format_f64, write_records};
use crate::rng::{derive_seed, stream};
use crate::solver::{solve, PcpConfig};

/// Hold-out needs at least this many observed entries.
pub const MIN_OBSERVED: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    pub rank_grid: Vec<usize>,
    pub holdout_fraction: f64,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            rank_grid: (1..=10).collect(),
            holdout_fraction: 0.20,
            repeats: 100,
            seed: 0,
        }
    }
}

impl CvConfig {
    pub fn validate(&self, n: usize, p: usize) -> Result<()> {
        if self.rank_grid.is_empty() {
            return Err(Error::Config("rank grid is empty".into()));
        }
        let max = n.min(p);
        if let Some(&bad) = self.rank_grid.iter().find(|&&r| r == 0 || r > max) {
            return Err(Error::Config(format!(
                "rank {bad} in the grid must be in 1..={max} for a {n}x{p} matrix"
            )));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::Config(format!(
                "holdout fraction must lie in (0, 1), got {}",
                self.holdout_fraction
            )));
        }
        if self.repeats == 0 {
            return Err(Error::Config("at least one repeat is needed".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CvReport {
    pub rank_grid: Vec<usize>,
    /// `errors[g][i]`: rank `rank_grid[g]`, repeat `i`.
    pub errors: Vec<Vec<f64>>,
    pub mean_errors: Vec<f64>,
    pub sd_errors: Vec<f64>,
    pub selected_rank: usize,
    pub seed: u64,
}

/// Uniform sample of `round(fraction · #observed)` observed positions, in
/// column-major order.
pub fn holdout_mask<R: rand::Rng + ?Sized>(
    x: &MaskedMatrix,
    fraction: f64,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    let eligible = x.positions(EntryStatus::Observed);
    if eligible.len() < MIN_OBSERVED {
        return Err(Error::InsufficientData(format!(
            "{} observed entries, hold-out needs at least {MIN_OBSERVED}",
            eligible.len()
        )));
    }
    let count = (fraction * eligible.len() as f64).round() as usize;
    if count == 0 || count >= eligible.len() {
        return Err(Error::InsufficientData(format!(
            "hold-out fraction {fraction} selects {count} of {} observed entries",
            eligible.len()
        )));
    }
    let mut picked = rand::seq::index::sample(rng, eligible.len(), count).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|k| eligible[k]).collect())
}

/// `‖X_Ω − L_Ω − S_Ω‖ / ‖X_Ω‖` over held-out positions.
pub fn recovery_error(
    x: &MaskedMatrix,
    held_out: &[(usize, usize)],
    low_rank: &DMatrix<f64>,
    sparse: &DMatrix<f64>,
) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for &(i, j) in held_out {
        let v = x.observed(i, j).ok_or_else(|| {
            Error::InsufficientData(format!("held-out entry ({i}, {j}) is not observed"))
        })?;
        let r = v - low_rank[(i, j)] - sparse[(i, j)];
        num += r * r;
        den += v * v;
    }
    if !(den > 0.0) {
        return Err(Error::UndefinedMetric(
            "held-out entries are all zero".into(),
        ));
    }
    Ok((num / den).sqrt())
}

pub fn cv_select_rank(x: &MaskedMatrix, template: &PcpConfig, cv: &CvConfig) -> Result<CvReport> {
    let (n, p) = x.shape();
    cv.validate(n, p)?;
    for &r in &cv.rank_grid {
        template.with_rank(r).validate(n, p)?;
    }

    let masks: Vec<Vec<(usize, usize)>> = (0..cv.repeats)
        .map(|i| {
            holdout_mask(
                x,
                cv.holdout_fraction,
                &mut stream(derive_seed(cv.seed, i as u64), 0),
            )
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..cv.rank_grid.len())
        .flat_map(|g| (0..cv.repeats).map(move |i| (g, i)))
        .collect();
    let results: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(g, i)| {
            let rank = cv.rank_grid[g];
            let corrupted = x.with_missing(&masks[i]);
            solve(&corrupted, &template.with_rank(rank))
                .and_then(|d| recovery_error(x, &masks[i], &d.low_rank, &d.sparse))
                .map_err(|e| Error::CrossValidation {
                    rank,
                    repeat: i,
                    source: Box::new(e),
                })
        })
        .collect();

    let mut errors = vec![Vec::with_capacity(cv.repeats); cv.rank_grid.len()];
    for ((g, _), res) in jobs.iter().zip(results) {
        errors[*g].push(res?);
    }
    let mean_errors: Vec<f64> = errors
        .iter()
        .map(|e| e.iter().sum::<f64>() / e.len() as f64)
        .collect();
    let sd_errors: Vec<f64> = errors
        .iter()
        .map(|e| if e.len() > 1 { sample_sd(e) } else { 0.0 })
        .collect();
    let best = (0..cv.rank_grid.len())
        .min_by(|&a, &b| {
            mean_errors[a]
                .total_cmp(&mean_errors[b])
                .then(cv.rank_grid[a].cmp(&cv.rank_grid[b]))
        })
        .expect("non-empty grid");
    Ok(CvReport {
        rank_grid: cv.rank_grid.clone(),
        selected_rank: cv.rank_grid[best],
        errors,
        mean_errors,
        sd_errors,
        seed: cv.seed,
    })
}

/// `cv_errors.csv` (rank, repeat, error) and `cv_summary.csv`
/// (rank, mean_error, sd_error).
pub fn write_cv_report(report: &CvReport, dir: &Path) -> Result<()> {
    let mut rows = Vec::new();
    for (g, &rank) in report.rank_grid.iter().enumerate() {
        for (i, e) in report.errors[g].iter().enumerate() {
            rows.push(vec![rank.to_string(), (i + 1).to_string(), format_f64(*e)]);
        }
    }
    write_records(
        &dir.join("cv_errors.csv"),
        &["rank", "repeat", "error"],
        &rows,
    )?;
    let summary: Vec<Vec<String>> = report
        .rank_grid
        .iter()
        .enumerate()
        .map(|(g, &rank)| {
            vec![
                rank.to_string(),
                format_f64(report.mean_errors[g]),
                format_f64(report.sd_errors[g]),
            ]
        })
        .collect();
    write_records(
        &dir.join("cv_summary.csv"),
        &["rank", "mean_error", "sd_error"],
        &summary,
    )
}
