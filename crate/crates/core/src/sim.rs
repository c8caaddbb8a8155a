//! Synthetic exposure mixtures.
//!
//! Four patterns load on `p` chemicals. Each pattern owns `p/8` chemicals
//! outright (loading 1) and shares `p/8` chemicals with each cyclic neighbour,
//! split as `(u, 1 - u)` with `u ~ U(0, 1)`. Scores are `logN(1, 1)`. After
//! adding noise and clipping at zero, each column is censored below its
//! empirical `lod_quantile`.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::{default_column_names, EntryStatus, MaskedMatrix};
use crate::error::{Error, Result};
use crate::io::{
    read_dense_csv, read_matrix_csv, write_masked_csv, write_matrix_csv, write_text, MatrixSchema,
};
use crate::rng::{stream, MAX_SEED};

const LOADINGS_STREAM: u64 = 0;
const SCORES_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const SPIKE_STREAM: u64 = 3;
const PANEL_CENSOR_STREAM: u64 = 4;

/// Number of patterns the overlap scheme is defined for.
pub const PATTERNS: usize = 4;

#[derive(
    Debug,
    Clone,
    Copy,
    PartialEq,
    Eq,
    PartialOrd,
    Ord,
    Hash,
    Serialize,
    Deserialize,
    clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    /// N(0, 1) on every entry.
    Low,
    /// N(0, 5) on every entry.
    High,
    /// N(0, 1) plus sparse positive spikes.
    Sparse,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 3] = [NoiseKind::Low, NoiseKind::High, NoiseKind::Sparse];

    pub fn sd(self) -> f64 {
        match self {
            NoiseKind::High => 5.0,
            NoiseKind::Low | NoiseKind::Sparse => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Low => "low",
            NoiseKind::High => "high",
            NoiseKind::Sparse => "sparse",
        }
    }
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimScenario {
    pub n: usize,
    pub p: usize,
    pub r_true: usize,
    pub noise: NoiseKind,
    pub lod_quantile: f64,
    pub sparse_prob: f64,
    pub sparse_magnitude_range: [f64; 2],
    pub seed: u64,
    /// Position of this draw within a batch of replicates; not used by the
    /// generator.
    #[serde(default)]
    pub replicate: usize,
}

impl Default for SimScenario {
    fn default() -> Self {
        Self {
            n: 500,
            p: 16,
            r_true: PATTERNS,
            noise: NoiseKind::Low,
            lod_quantile: 0.25,
            sparse_prob: 0.05,
            sparse_magnitude_range: [5.0, 15.0],
            seed: 0,
            replicate: 0,
        }
    }
}

impl SimScenario {
    pub fn new(p: usize, noise: NoiseKind, lod_quantile: f64, seed: u64) -> Self {
        Self {
            p,
            noise,
            lod_quantile,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_pattern_shape(self.p, self.r_true)?;
        if self.n < 2 {
            return Err(Error::Config(format!(
                "n must be at least 2, got {}",
                self.n
            )));
        }
        if self.seed > MAX_SEED {
            return Err(Error::Config(format!("seed must be at most {MAX_SEED}")));
        }
        if !(0.0..1.0).contains(&self.lod_quantile) {
            return Err(Error::Config(format!(
                "lod_quantile must lie in [0, 1), got {}",
                self.lod_quantile
            )));
        }
        if !(0.0..=1.0).contains(&self.sparse_prob) {
            return Err(Error::Config(format!(
                "sparse_prob must lie in [0, 1], got {}",
                self.sparse_prob
            )));
        }
        let [lo, hi] = self.sparse_magnitude_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Config(format!(
                "sparse_magnitude_range must be a finite interval, got [{lo}, {hi}]"
            )));
        }
        Ok(())
    }

    /// Short directory-friendly label, e.g. `p16_low_q25`.
    pub fn label(&self) -> String {
        format!(
            "p{}_{}_q{}",
            self.p,
            self.noise,
            (self.lod_quantile * 100.0).round() as i64
        )
    }
}

fn check_pattern_shape(p: usize, r_true: usize) -> Result<()> {
    if r_true != PATTERNS {
        return Err(Error::Config(format!(
            "the overlap scheme needs exactly {PATTERNS} patterns, got {r_true}"
        )));
    }
    if p == 0 || !p.is_multiple_of(8) {
        return Err(Error::Config(format!(
            "p must be a positive multiple of 8, got {p}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SimDataset {
    pub scenario: SimScenario,
    /// `r_true × p`, columns sum to one.
    pub loadings: DMatrix<f64>,
    /// `n × r_true`, strictly positive.
    pub scores: DMatrix<f64>,
    pub clean: DMatrix<f64>,
    pub noisy: DMatrix<f64>,
    /// Spike magnitudes at spiked entries, zero elsewhere.
    pub sparse_truth: DMatrix<f64>,
    pub censored: MaskedMatrix,
}

impl SimDataset {
    pub fn seed(&self) -> u64 {
        self.scenario.seed
    }
}

/// Pattern loadings: distinct chemicals first, then the shared ones for the
/// pattern pairs (1,2), (2,3), (3,4), (4,1).
pub fn gen_loadings<R: Rng + ?Sized>(p: usize, r_true: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    check_pattern_shape(p, r_true)?;
    let per = p / 8;
    let mut h = DMatrix::zeros(r_true, p);
    let mut col = 0;
    for k in 0..r_true {
        for _ in 0..per {
            h[(k, col)] = 1.0;
            col += 1;
        }
    }
    for k in 0..r_true {
        let next = (k + 1) % r_true;
        for _ in 0..per {
            // open interval so both partners load strictly positive
            let u = loop {
                let u: f64 = rng.random();
                if u > 0.0 {
                    break u;
                }
            };
            h[(k, col)] = u;
            h[(next, col)] = 1.0 - u;
            col += 1;
        }
    }
    Ok(h)
}

pub fn gen_dataset(s: &SimScenario) -> Result<SimDataset> {
    s.validate()?;
    let (n, p, r) = (s.n, s.p, s.r_true);

    let loadings = gen_loadings(p, r, &mut stream(s.seed, LOADINGS_STREAM))?;

    let mut rng = stream(s.seed, SCORES_STREAM);
    let lognormal = LogNormal::new(1.0, 1.0).expect("valid lognormal");
    let scores = DMatrix::from_fn(n, r, |_, _| lognormal.sample(&mut rng));
    let clean = &scores * &loadings;

    let mut rng = stream(s.seed, NOISE_STREAM);
    let normal = Normal::new(0.0, s.noise.sd()).expect("valid normal");
    let mut noisy = clean.map(|v| v + normal.sample(&mut rng));

    let mut sparse_truth = DMatrix::zeros(n, p);
    if s.noise == NoiseKind::Sparse {
        let mut rng = stream(s.seed, SPIKE_STREAM);
        let [lo, hi] = s.sparse_magnitude_range;
        let magnitude = Uniform::new_inclusive(lo, hi).map_err(|e| Error::Config(e.to_string()))?;
        for v in sparse_truth.iter_mut() {
            if rng.random::<f64>() < s.sparse_prob {
                *v = magnitude.sample(&mut rng);
            }
        }
        noisy += &sparse_truth;
    }
    noisy.apply(|v| *v = v.max(0.0));

    let censored = censor_columns(&noisy, s.lod_quantile)?;
    Ok(SimDataset {
        scenario: s.clone(),
        loadings,
        scores,
        clean,
        noisy,
        sparse_truth,
        censored,
    })
}

/// Per-column censoring at the `k`-th smallest value, `k = round(q·n)`;
/// entries strictly below become `BelowLod` with that value as LOD.
pub fn censor_columns(x: &DMatrix<f64>, q: f64) -> Result<MaskedMatrix> {
    let (n, p) = x.shape();
    let k = ((q * n as f64).round() as usize).min(n - 1);
    let mut values = x.clone();
    let mut status = DMatrix::from_element(n, p, EntryStatus::Observed);
    let mut delta = DMatrix::zeros(n, p);
    if k > 0 {
        for j in 0..p {
            let mut sorted: Vec<f64> = x.column(j).iter().copied().collect();
            sorted.sort_by(f64::total_cmp);
            let threshold = sorted[k];
            delta.column_mut(j).fill(threshold);
            for i in 0..n {
                if x[(i, j)] < threshold {
                    status[(i, j)] = EntryStatus::BelowLod;
                    values[(i, j)] = f64::NAN;
                }
            }
        }
    }
    MaskedMatrix::new(values, status, delta, default_column_names(p))
}

pub const OBSERVED_FILE: &str = "X.csv";
pub const SCENARIO_FILE: &str = "scenario.toml";

/// Writes `X.csv` (with status and delta companions), the truth matrices and
/// `scenario.toml` into `dir`.
pub fn write_dataset(ds: &SimDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let chem = ds.censored.column_names().to_vec();
    let patterns: Vec<String> = (1..=ds.scenario.r_true)
        .map(|k| format!("pattern{k}"))
        .collect();
    write_masked_csv(&ds.censored, &dir.join(OBSERVED_FILE))?;
    write_matrix_csv(&ds.clean, &chem, &dir.join("clean.csv"))?;
    write_matrix_csv(&ds.noisy, &chem, &dir.join("noisy.csv"))?;
    write_matrix_csv(&ds.sparse_truth, &chem, &dir.join("sparse_truth.csv"))?;
    write_matrix_csv(&ds.loadings, &chem, &dir.join("loadings.csv"))?;
    write_matrix_csv(&ds.scores, &patterns, &dir.join("scores.csv"))?;
    let manifest = toml::to_string(&ds.scenario).map_err(|e| Error::Manifest(e.to_string()))?;
    write_text(&dir.join(SCENARIO_FILE), &manifest)
}

/// Truth needed for evaluation, read back from a dataset directory.
#[derive(Debug, Clone)]
pub struct DatasetTruth {
    pub scenario: SimScenario,
    pub observed: MaskedMatrix,
    pub clean: DMatrix<f64>,
    pub sparse_truth: DMatrix<f64>,
}

pub fn read_dataset(dir: &Path) -> Result<DatasetTruth> {
    let path = dir.join(SCENARIO_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let scenario: SimScenario =
        toml::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    let observed = read_matrix_csv(&dir.join(OBSERVED_FILE), &MatrixSchema::companion())?;
    let (clean, _) = read_dense_csv(&dir.join("clean.csv"))?;
    let (sparse_truth, _) = read_dense_csv(&dir.join("sparse_truth.csv"))?;
    if clean.shape() != observed.shape() || sparse_truth.shape() != observed.shape() {
        return Err(Error::Shape(format!(
            "truth matrices in {} do not match X.csv",
            dir.display()
        )));
    }
    Ok(DatasetTruth {
        scenario,
        observed,
        clean,
        sparse_truth,
    })
}

/// Chemical names of the bundled persistent-pollutant panel: nine
/// non-dioxin-like PCBs, three dioxin-like PCBs, five dioxins, four furans.
pub const PANEL_CHEMICALS: [&str; 21] = [
    "PCB074", "PCB099", "PCB138", "PCB153", "PCB170", "PCB180", "PCB187", "PCB194", "PCB196",
    "PCB118", "PCB156", "PCB126", "TCDD", "PeCDD", "HxCDD", "HpCDD", "OCDD", "PeCDF", "HxCDF",
    "HpCDF", "OCDF",
];

/// A panel resembling serum pollutant measurements, for exercising the
/// application path without real survey data.
#[derive(Debug, Clone)]
pub struct PanelDataset {
    pub observed: MaskedMatrix,
    /// Noise-free three-pattern signal.
    pub clean: DMatrix<f64>,
    pub seed: u64,
}

/// `n × 21` panel with three overlapping patterns (non-dioxin-like PCBs,
/// dioxin-like PCBs with the mono-ortho congeners, dioxins and furans),
/// occasional high spikes, per-entry detection limits that vary around a
/// chemical-specific censoring quantile, and about 1% missing entries.
pub fn gen_panel(n: usize, seed: u64) -> Result<PanelDataset> {
    if n < 2 {
        return Err(Error::Config(format!(
            "panel needs at least 2 rows, got {n}"
        )));
    }
    let p = PANEL_CHEMICALS.len();
    let mut rng = stream(seed, LOADINGS_STREAM);
    let mut loadings = DMatrix::zeros(3, p);
    for j in 0..p {
        let (main, other) = match j {
            0..=8 => (0, None),
            9..=10 => (0, Some(1)),
            11 => (1, None),
            12..=16 => (2, None),
            _ => (2, Some(1)),
        };
        let w: f64 = rng.random_range(0.5..1.5);
        match other {
            Some(k) => {
                let u: f64 = rng.random_range(0.3..0.7);
                loadings[(main, j)] = w * u;
                loadings[(k, j)] = w * (1.0 - u);
            }
            None => loadings[(main, j)] = w,
        }
    }

    let mut rng = stream(seed, SCORES_STREAM);
    let lognormal = LogNormal::new(0.0, 0.7).expect("valid lognormal");
    let scores = DMatrix::from_fn(n, 3, |_, k| [3.0, 1.0, 1.5][k] * lognormal.sample(&mut rng));
    let clean = &scores * &loadings;

    let mut rng = stream(seed, NOISE_STREAM);
    let normal = Normal::new(0.0, 0.15).expect("valid normal");
    let mut noisy = clean.map(|v| (v + normal.sample(&mut rng)).max(0.0));
    let mut rng = stream(seed, SPIKE_STREAM);
    for v in noisy.iter_mut() {
        if rng.random::<f64>() < 0.03 {
            *v += rng.random_range(2.0..6.0);
        }
    }

    let mut rng = stream(seed, PANEL_CENSOR_STREAM);
    let mut values = noisy.clone();
    let mut status = DMatrix::from_element(n, p, EntryStatus::Observed);
    let mut delta = DMatrix::zeros(n, p);
    for j in 0..p {
        let q: f64 = rng.random_range(0.05..0.6);
        let mut sorted: Vec<f64> = noisy.column(j).iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        let base = sorted[((q * n as f64) as usize).min(n - 1)].max(1e-3);
        for i in 0..n {
            let lod = base * rng.random_range(0.7..1.3);
            delta[(i, j)] = lod;
            if rng.random::<f64>() < 0.01 {
                status[(i, j)] = EntryStatus::Missing;
                values[(i, j)] = f64::NAN;
            } else if noisy[(i, j)] < lod {
                status[(i, j)] = EntryStatus::BelowLod;
                values[(i, j)] = f64::NAN;
            }
        }
    }
    let names = PANEL_CHEMICALS.iter().map(|s| s.to_string()).collect();
    Ok(PanelDataset {
        observed: MaskedMatrix::new(values, status, delta, names)?,
        clean,
        seed,
    })
}

/// Writes `X.csv` with companions and `clean.csv`.
pub fn write_panel(panel: &PanelDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_masked_csv(&panel.observed, &dir.join(OBSERVED_FILE))?;
    write_matrix_csv(
        &panel.clean,
        panel.observed.column_names(),
        &dir.join("clean.csv"),
    )
}
