//! Masked exposure matrices: values, per-entry detection status and limits of detection.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Detection status of a single matrix entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntryStatus {
    Observed,
    BelowLod,
    Missing,
}

impl EntryStatus {
    pub fn token(self) -> &'static str {
        match self {
            EntryStatus::Observed => "O",
            EntryStatus::BelowLod => "L",
            EntryStatus::Missing => "M",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        match token.trim() {
            "O" => Some(EntryStatus::Observed),
            "L" => Some(EntryStatus::BelowLod),
            "M" => Some(EntryStatus::Missing),
            _ => None,
        }
    }
}

/// An n×p exposure matrix where every entry is observed, censored below a
/// limit of detection, or missing.
///
/// Values stored at non-observed positions are never read; they are kept
/// as given (normally `NaN`).
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedMatrix {
    values: DMatrix<f64>,
    status: DMatrix<EntryStatus>,
    delta: DMatrix<f64>,
    column_names: Vec<String>,
    scale: Option<Vec<f64>>,
}

impl MaskedMatrix {
    pub fn new(
        values: DMatrix<f64>,
        status: DMatrix<EntryStatus>,
        delta: DMatrix<f64>,
        column_names: Vec<String>,
    ) -> Result<Self> {
        let (n, p) = values.shape();
        if n == 0 || p == 0 {
            return Err(Error::Shape(format!(
                "matrix must be non-empty, got {n}x{p}"
            )));
        }
        if status.shape() != (n, p) || delta.shape() != (n, p) {
            return Err(Error::Shape(format!(
                "values {}x{}, status {}x{}, delta {}x{}",
                n,
                p,
                status.nrows(),
                status.ncols(),
                delta.nrows(),
                delta.ncols()
            )));
        }
        if column_names.len() != p {
            return Err(Error::Shape(format!(
                "{} column names for {} columns",
                column_names.len(),
                p
            )));
        }
        for j in 0..p {
            for i in 0..n {
                match status[(i, j)] {
                    EntryStatus::Observed => {
                        let v = values[(i, j)];
                        if !v.is_finite() || v < 0.0 {
                            return Err(Error::Domain(format!(
                                "observed value {v} at ({i}, {j}) must be finite and non-negative"
                            )));
                        }
                    }
                    EntryStatus::BelowLod => {
                        let d = delta[(i, j)];
                        if !(d.is_finite() && d > 0.0) {
                            return Err(Error::Schema(format!(
                                "below-LOD entry at ({i}, {j}) needs a positive finite LOD, got {d}"
                            )));
                        }
                    }
                    EntryStatus::Missing => {}
                }
            }
        }
        Ok(Self {
            values,
            status,
            delta,
            column_names,
            scale: None,
        })
    }

    /// All-observed matrix with generated column names `c1..cp`.
    pub fn fully_observed(values: DMatrix<f64>) -> Result<Self> {
        let (n, p) = values.shape();
        let names = default_column_names(p);
        Self::new(
            values,
            DMatrix::from_element(n, p, EntryStatus::Observed),
            DMatrix::zeros(n, p),
            names,
        )
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn status(&self, i: usize, j: usize) -> EntryStatus {
        self.status[(i, j)]
    }

    pub fn status_matrix(&self) -> &DMatrix<EntryStatus> {
        &self.status
    }

    pub fn delta(&self, i: usize, j: usize) -> f64 {
        self.delta[(i, j)]
    }

    pub fn delta_matrix(&self) -> &DMatrix<f64> {
        &self.delta
    }

    /// The stored value, only for observed entries.
    pub fn observed(&self, i: usize, j: usize) -> Option<f64> {
        match self.status[(i, j)] {
            EntryStatus::Observed => Some(self.values[(i, j)]),
            _ => None,
        }
    }

    /// Raw storage including sentinels; callers must consult the status.
    pub fn raw_values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn scale(&self) -> Option<&[f64]> {
        self.scale.as_deref()
    }

    pub fn count(&self, status: EntryStatus) -> usize {
        self.status.iter().filter(|&&s| s == status).count()
    }

    /// Positions with the given status, in column-major order.
    pub fn positions(&self, status: EntryStatus) -> Vec<(usize, usize)> {
        let (n, p) = self.shape();
        let mut out = Vec::new();
        for j in 0..p {
            for i in 0..n {
                if self.status[(i, j)] == status {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Copy with the given positions re-marked as missing.
    pub fn with_missing(&self, positions: &[(usize, usize)]) -> Self {
        let mut out = self.clone();
        for &(i, j) in positions {
            out.status[(i, j)] = EntryStatus::Missing;
            out.values[(i, j)] = f64::NAN;
        }
        out
    }

    /// Dense matrix with observed values and `fill` applied elsewhere.
    pub fn fill_unobserved(&self, fill: impl Fn(EntryStatus, f64) -> f64) -> DMatrix<f64> {
        let (n, p) = self.shape();
        DMatrix::from_fn(n, p, |i, j| match self.status[(i, j)] {
            EntryStatus::Observed => self.values[(i, j)],
            s => fill(s, self.delta[(i, j)]),
        })
    }

    /// Divide each column's observed values and LODs by the sample standard
    /// deviation (n − 1 denominator) of its observed values. No centering.
    pub fn standardize_columns(&self) -> Result<Self> {
        let (n, p) = self.shape();
        let mut out = self.clone();
        let mut factors = Vec::with_capacity(p);
        for j in 0..p {
            let obs: Vec<f64> = (0..n).filter_map(|i| self.observed(i, j)).collect();
            if obs.len() < 2 {
                return Err(Error::InsufficientData(format!(
                    "column `{}` has {} observed entries, need at least 2",
                    self.column_names[j],
                    obs.len()
                )));
            }
            let sd = sample_sd(&obs);
            if !(sd > 0.0) {
                return Err(Error::DegenerateColumn(self.column_names[j].clone()));
            }
            for i in 0..n {
                if self.status[(i, j)] == EntryStatus::Observed {
                    out.values[(i, j)] = self.values[(i, j)] / sd;
                }
                out.delta[(i, j)] = self.delta[(i, j)] / sd;
            }
            factors.push(sd);
        }
        out.scale = Some(match &self.scale {
            Some(prev) => prev.iter().zip(&factors).map(|(a, b)| a * b).collect(),
            None => factors,
        });
        Ok(out)
    }
}

pub fn default_column_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("c{j}")).collect()
}

/// Sample standard deviation with the n − 1 denominator.
pub fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (ss / (n - 1.0)).sqrt()
}
