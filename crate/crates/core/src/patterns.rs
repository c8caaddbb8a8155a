//! Pattern extraction from the low-rank estimate and sparse-event labelling.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::data::{EntryStatus, MaskedMatrix};
use crate::error::{Error, Result};
use crate::io::{format_f64, write_records};
use crate::linalg::{effective_rank, thin_svd};

#[derive(Debug, Clone)]
pub struct PatternModel {
    /// `n × k` individual scores direction.
    pub left_vectors: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    /// `p × k` chemical loadings.
    pub right_vectors: DMatrix<f64>,
    /// Share of `‖L‖²_F` carried by each retained component.
    pub explained_share: DVector<f64>,
}

/// Top-`k` SVD of `l`, uncentered.
pub fn extract_patterns(l: &DMatrix<f64>, k: usize) -> Result<PatternModel> {
    let rank = effective_rank(l);
    if k == 0 || k > rank {
        return Err(Error::Config(format!(
            "cannot extract {k} patterns from a matrix of effective rank {rank}"
        )));
    }
    let svd = thin_svd(l)?;
    let total: f64 = svd.sigma.iter().map(|s| s * s).sum();
    let singular_values = svd.sigma.rows(0, k).into_owned();
    Ok(PatternModel {
        explained_share: singular_values.map(|s| s * s / total),
        left_vectors: svd.u.columns(0, k).into_owned(),
        right_vectors: svd.v.columns(0, k).into_owned(),
        singular_values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SparseClass {
    High,
    Low,
    Null,
}

impl SparseClass {
    pub fn token(self) -> &'static str {
        match self {
            SparseClass::High => "high",
            SparseClass::Low => "low",
            SparseClass::Null => "null",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        [SparseClass::High, SparseClass::Low, SparseClass::Null]
            .into_iter()
            .find(|c| c.token() == token)
    }
}

#[derive(Debug, Clone)]
pub struct SparseEventTable {
    pub classes: DMatrix<SparseClass>,
    /// Population sd of `X − L` over observed entries; `None` for columns
    /// with fewer than two observed entries, which are left all `Null`.
    pub residual_sd: Vec<Option<f64>>,
    pub high_counts: Vec<usize>,
    pub low_counts: Vec<usize>,
    /// Entries of `X` that were measured above the detection limit.
    pub observed: DMatrix<bool>,
}

impl SparseEventTable {
    pub fn threshold(&self, j: usize) -> Option<f64> {
        self.residual_sd[j].map(|sd| 2.0 * sd)
    }

    pub fn excluded_columns(&self) -> Vec<usize> {
        (0..self.residual_sd.len())
            .filter(|&j| self.residual_sd[j].is_none())
            .collect()
    }

    /// Participants by (number of low events, number of high events).
    pub fn histogram(&self) -> DMatrix<usize> {
        let max_low = self.low_counts.iter().copied().max().unwrap_or(0);
        let max_high = self.high_counts.iter().copied().max().unwrap_or(0);
        let mut h = DMatrix::zeros(max_low + 1, max_high + 1);
        for (&lo, &hi) in self.low_counts.iter().zip(&self.high_counts) {
            h[(lo, hi)] += 1;
        }
        h
    }
}

/// Labels `S_ij` High above `2·sd_j`, Low below `−2·sd_j`, where `sd_j` is
/// the population sd of `X − L` over the observed entries of column `j`.
pub fn classify_sparse(
    s: &DMatrix<f64>,
    x: &MaskedMatrix,
    l: &DMatrix<f64>,
) -> Result<SparseEventTable> {
    let (n, p) = x.shape();
    if s.shape() != (n, p) || l.shape() != (n, p) {
        return Err(Error::Shape(format!(
            "S {}x{}, L {}x{}, X {n}x{p}",
            s.nrows(),
            s.ncols(),
            l.nrows(),
            l.ncols()
        )));
    }
    let mut classes = DMatrix::from_element(n, p, SparseClass::Null);
    let mut residual_sd = Vec::with_capacity(p);
    for j in 0..p {
        let resid: Vec<f64> = (0..n)
            .filter_map(|i| x.observed(i, j).map(|v| v - l[(i, j)]))
            .collect();
        if resid.len() < 2 {
            residual_sd.push(None);
            continue;
        }
        let m = resid.len() as f64;
        let mean = resid.iter().sum::<f64>() / m;
        let sd = (resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / m).sqrt();
        let t = 2.0 * sd;
        for i in 0..n {
            let v = s[(i, j)];
            classes[(i, j)] = if v > t {
                SparseClass::High
            } else if v < -t {
                SparseClass::Low
            } else {
                SparseClass::Null
            };
        }
        residual_sd.push(Some(sd));
    }
    let count = |i: usize, c: SparseClass| (0..p).filter(|&j| classes[(i, j)] == c).count();
    let high_counts = (0..n).map(|i| count(i, SparseClass::High)).collect();
    let low_counts = (0..n).map(|i| count(i, SparseClass::Low)).collect();
    Ok(SparseEventTable {
        classes,
        residual_sd,
        high_counts,
        low_counts,
        observed: DMatrix::from_fn(n, p, |i, j| x.status(i, j) == EntryStatus::Observed),
    })
}

#[derive(Debug, Clone)]
pub struct SparsityStats {
    pub non_null_fraction: f64,
    /// Non-null share among observed entries only.
    pub non_null_fraction_observed: f64,
    pub high_fraction: f64,
    pub low_fraction: f64,
    pub histogram: DMatrix<usize>,
    /// Share of planted spikes labelled High, when a truth matrix is given
    /// and has at least one spike.
    pub capture_rate: Option<f64>,
}

pub fn sparsity_stats(
    table: &SparseEventTable,
    sparse_truth: Option<&DMatrix<f64>>,
) -> Result<SparsityStats> {
    let total = table.classes.len() as f64;
    let frac = |c: SparseClass| table.classes.iter().filter(|&&v| v == c).count() as f64 / total;
    let capture_rate = match sparse_truth {
        Some(truth) => {
            if truth.shape() != table.classes.shape() {
                return Err(Error::Shape(
                    "sparse truth does not match the event table".into(),
                ));
            }
            let planted = truth.iter().filter(|&&v| v != 0.0).count();
            let hit = truth
                .iter()
                .zip(table.classes.iter())
                .filter(|(&t, &c)| t != 0.0 && c == SparseClass::High)
                .count();
            (planted > 0).then(|| hit as f64 / planted as f64)
        }
        None => None,
    };
    let high_fraction = frac(SparseClass::High);
    let low_fraction = frac(SparseClass::Low);
    let observed = table.observed.iter().filter(|&&o| o).count();
    let observed_events = table
        .classes
        .iter()
        .zip(table.observed.iter())
        .filter(|(&c, &o)| o && c != SparseClass::Null)
        .count();
    Ok(SparsityStats {
        non_null_fraction: high_fraction + low_fraction,
        non_null_fraction_observed: if observed > 0 {
            observed_events as f64 / observed as f64
        } else {
            0.0
        },
        high_fraction,
        low_fraction,
        histogram: table.histogram(),
        capture_rate,
    })
}

/// Histogram with low-event counts as rows, high-event counts as columns,
/// row totals in the last column and column totals in the last row.
pub fn write_event_histogram(table: &SparseEventTable, path: &Path) -> Result<()> {
    let h = table.histogram();
    let mut header: Vec<String> = vec!["low_events".into()];
    header.extend((0..h.ncols()).map(|c| format!("high_{c}")));
    header.push("total".into());
    let mut rows: Vec<Vec<String>> = (0..h.nrows())
        .map(|r| {
            let mut row = vec![r.to_string()];
            row.extend(h.row(r).iter().map(|v| v.to_string()));
            row.push(h.row(r).sum().to_string());
            row
        })
        .collect();
    let mut totals = vec!["total".to_string()];
    totals.extend((0..h.ncols()).map(|c| h.column(c).sum().to_string()));
    totals.push(h.sum().to_string());
    rows.push(totals);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_records(path, &header, &rows)
}

/// One row per entry: row, column name, S value, class.
pub fn write_event_classes(
    table: &SparseEventTable,
    s: &DMatrix<f64>,
    names: &[String],
    path: &Path,
) -> Result<()> {
    let (n, p) = table.classes.shape();
    let mut rows = Vec::with_capacity(n * p);
    for i in 0..n {
        for j in 0..p {
            rows.push(vec![
                (i + 1).to_string(),
                names[j].clone(),
                format_f64(s[(i, j)]),
                table.classes[(i, j)].token().to_string(),
            ]);
        }
    }
    write_records(path, &["row", "chemical", "sparse", "class"], &rows)
}

/// Per-chemical residual sd and threshold; excluded columns are left blank.
pub fn write_thresholds(table: &SparseEventTable, names: &[String], path: &Path) -> Result<()> {
    let rows: Vec<Vec<String>> = names
        .iter()
        .zip(&table.residual_sd)
        .map(|(name, sd)| match sd {
            Some(sd) => vec![name.clone(), format_f64(*sd), format_f64(2.0 * sd)],
            None => vec![name.clone(), String::new(), String::new()],
        })
        .collect();
    write_records(path, &["chemical", "residual_sd", "threshold"], &rows)
}

pub fn write_patterns(model: &PatternModel, names: &[String], dir: &Path) -> Result<()> {
    let k = model.singular_values.len();
    let mut rows = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        let mut row = vec![name.clone()];
        row.extend((0..k).map(|c| format_f64(model.right_vectors[(j, c)])));
        rows.push(row);
    }
    let mut header = vec!["chemical".to_string()];
    header.extend((1..=k).map(|c| format!("pattern{c}")));
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    write_records(&dir.join("loadings.csv"), &header_ref, &rows)?;

    let score_rows: Vec<Vec<String>> = (0..model.left_vectors.nrows())
        .map(|i| {
            (0..k)
                .map(|c| format_f64(model.left_vectors[(i, c)] * model.singular_values[c]))
                .collect()
        })
        .collect();
    write_records(&dir.join("scores.csv"), &header_ref[1..], &score_rows)?;

    let share_rows: Vec<Vec<String>> = (0..k)
        .map(|c| {
            vec![
                (c + 1).to_string(),
                format_f64(model.singular_values[c]),
                format_f64(model.explained_share[c]),
            ]
        })
        .collect();
    write_records(
        &dir.join("explained.csv"),
        &["pattern", "singular_value", "explained_share"],
        &share_rows,
    )
}

/// Entries that were observed, split from those censored; missing entries are
/// in neither.
pub fn strata(x: &MaskedMatrix) -> (DMatrix<bool>, DMatrix<bool>) {
    let (n, p) = x.shape();
    let above = DMatrix::from_fn(n, p, |i, j| x.status(i, j) == EntryStatus::Observed);
    let below = DMatrix::from_fn(n, p, |i, j| x.status(i, j) == EntryStatus::BelowLod);
    (above, below)
}
