//! Batch command-line front end.
//!
//! Every subcommand writes into an output directory that ends up holding
//! exactly one `manifest.toml`. A manifest is also a valid `--config` file:
//! its `[simulate]`, `[solve]`, ... table carries the fully resolved flags, so
//! `pcplod --config OUT/manifest.toml solve --out OTHER` repeats a run.
//! Flags given on the command line override the config file.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cv::{cv_select_rank, write_cv_report, CvConfig};
use crate::data::{EntryStatus, MaskedMatrix};
use crate::error::{Error, Result};
use crate::io::{
    format_f64, read_dense_csv, read_matrix_csv, write_matrix_csv, write_records, write_text,
    MatrixSchema,
};
use crate::metrics::{eigenvector_error, relative_error, Side};
use crate::patterns::{
    classify_sparse, extract_patterns, sparsity_stats, strata, write_event_classes,
    write_event_histogram, write_patterns, write_thresholds,
};
use crate::pca::{fit_pca, impute_lod, write_pca, DEFAULT_VARIANCE};
use crate::report::{
    plot_boxplots, plot_loadings, plot_sparse_events, read_event_classes, read_loadings,
    read_metrics, write_layout_table, write_metrics, write_summary, MetricRecord, STRATUM_ABOVE,
    STRATUM_BELOW, STRATUM_OVERALL,
};
use crate::rng::{derive_seed, MAX_SEED};
use crate::sim::{
    gen_dataset, gen_panel, read_dataset, write_dataset, write_panel, NoiseKind, SimScenario,
    OBSERVED_FILE,
};
use crate::solver::{solve, Decomposition, PcpConfig};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const JOBS_ENV: &str = "PCPLOD_JOBS";

pub const METHOD_PCP: &str = "pcp";
pub const METHOD_PCA: &str = "pca";

/// Sizes, noise structures and censoring levels of the full simulation grid.
pub const GRID_SIZES: [usize; 2] = [16, 48];
pub const GRID_QUANTILES: [f64; 3] = [0.25, 0.5, 0.75];

#[derive(Debug, Parser)]
#[command(
    name = "pcplod",
    version,
    about = "Low-rank + sparse decomposition of censored exposure data"
)]
pub struct Cli {
    /// TOML file with a table per subcommand; command-line flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads for replicate- and rank-level parallelism.
    #[arg(long, global = true, env = JOBS_ENV)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate simulated datasets.
    Simulate(SimulateArgs),
    /// Decompose a matrix into non-negative low-rank and sparse parts.
    Solve(SolveArgs),
    /// PCA baseline with LOD/√2 imputation.
    Pca(PcaArgs),
    /// Compare fitted matrices against simulation truth.
    Evaluate(EvaluateArgs),
    /// Percentile tables and figures.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Solve(_) => "solve",
            Command::Pca(_) => "pca",
            Command::Evaluate(_) => "evaluate",
            Command::Report(_) => "report",
        }
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of chemicals, a multiple of 8.
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long, value_enum)]
    pub noise: Option<NoiseKind>,
    /// Per-column censoring quantile.
    #[arg(long = "lod-q")]
    pub lod_q: Option<f64>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Probability of a spike per entry under sparse noise.
    #[arg(long)]
    pub sparse_prob: Option<f64>,
    /// Every combination of p ∈ {16, 48}, three noise structures and
    /// censoring at 25%, 50%, 75%.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub paper_grid: bool,
    /// The bundled 21-chemical pollutant panel instead of the pattern design.
    #[arg(long, conflicts_with = "paper_grid")]
    #[serde(default, skip_serializing_if = "is_false")]
    pub panel: bool,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveArgs {
    /// Dataset directory (holding X.csv) or matrix CSV file.
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, conflicts_with = "cv")]
    pub rank: Option<usize>,
    /// Choose the rank by hold-out cross-validation.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub cv: bool,
    #[arg(long)]
    pub cv_repeats: Option<usize>,
    #[arg(long)]
    pub cv_holdout: Option<f64>,
    /// Largest rank in the grid `1..=max`.
    #[arg(long)]
    pub cv_max_rank: Option<usize>,
    #[arg(long)]
    pub cv_seed: Option<u64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub polish_passes: Option<usize>,
    /// Divide each column and its LODs by the column's observed sd first.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub standardize: bool,
    /// Extract this many patterns from L and classify sparse events.
    #[arg(long)]
    pub patterns: Option<usize>,
    /// Single-file input whose first record holds per-column LODs.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub lod_row: bool,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcaArgs {
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Keep the fewest leading components explaining at least this share.
    #[arg(long)]
    pub variance: Option<f64>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub lod_row: bool,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateArgs {
    /// Simulated dataset directory.
    pub truth: Option<PathBuf>,
    /// Output directories of `solve` or `pca` runs on that dataset.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub methods: Vec<PathBuf>,
    /// Directory receiving `metrics.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also report errors over entries above and below the LOD.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub strata: bool,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportArgs {
    /// Metrics CSVs written by `evaluate`, or the directories holding them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub metrics: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// A `solve --patterns` output directory to draw loadings and events from.
    #[arg(long)]
    pub patterns: Option<PathBuf>,
}

/// Record of one run; doubles as a config file for repeating it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub jobs: usize,
    pub seeds: Vec<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub wall_time_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateArgs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveArgs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pca: Option<PcaArgs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluate: Option<EvaluateArgs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ReportArgs>,
    /// Command-specific results such as the selected rank.
    #[serde(default, skip_serializing_if = "toml::Table::is_empty")]
    pub results: toml::Table,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?;
    run(cli)
}

pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Some(
                text.parse::<toml::Table>()
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
            )
        }
        None => None,
    };
    let section = |name: &str| -> Option<toml::Table> {
        file.as_ref()
            .and_then(|t| t.get(name))
            .and_then(|v| v.as_table())
            .cloned()
    };
    let jobs = match cli.jobs {
        Some(j) => j,
        None => match file.as_ref().and_then(|t| t.get("jobs")) {
            Some(v) => v
                .as_integer()
                .and_then(|j| usize::try_from(j).ok())
                .ok_or_else(|| Error::Config("jobs must be a non-negative integer".into()))?,
            None => 0,
        },
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let jobs = pool.current_num_threads();
    let name = cli.command.name();
    let started = Instant::now();
    let mut manifest = RunManifest {
        command: name.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        jobs,
        seeds: Vec::new(),
        inputs: Vec::new(),
        outputs: Vec::new(),
        wall_time_seconds: 0.0,
        simulate: None,
        solve: None,
        pca: None,
        evaluate: None,
        report: None,
        results: toml::Table::new(),
    };
    let manifest_dir = pool.install(|| -> Result<PathBuf> {
        match cli.command {
            Command::Simulate(a) => {
                let a = merge(&a, section(name))?.resolved()?;
                let dir = cmd_simulate(&a, &mut manifest)?;
                manifest.simulate = Some(a);
                Ok(dir)
            }
            Command::Solve(a) => {
                let a = merge(&a, section(name))?.resolved()?;
                let dir = cmd_solve(&a, &mut manifest)?;
                manifest.solve = Some(a);
                Ok(dir)
            }
            Command::Pca(a) => {
                let a = merge(&a, section(name))?.resolved()?;
                let dir = cmd_pca(&a, &mut manifest)?;
                manifest.pca = Some(a);
                Ok(dir)
            }
            Command::Evaluate(a) => {
                let a = merge(&a, section(name))?;
                let dir = cmd_evaluate(&a, &mut manifest)?;
                manifest.evaluate = Some(a);
                Ok(dir)
            }
            Command::Report(a) => {
                let a = merge(&a, section(name))?;
                let dir = cmd_report(&a, &mut manifest)?;
                manifest.report = Some(a);
                Ok(dir)
            }
        }
    })?;
    manifest.wall_time_seconds = started.elapsed().as_secs_f64();
    let text = toml::to_string(&manifest).map_err(|e| Error::Manifest(e.to_string()))?;
    write_text(&manifest_dir.join(MANIFEST_FILE), &text)
}

/// Overlays the flags that were given on the command line onto a config
/// table.
fn merge<T: Serialize + DeserializeOwned>(cli: &T, file: Option<toml::Table>) -> Result<T> {
    let given = toml::Table::try_from(cli).map_err(|e| Error::Config(e.to_string()))?;
    let mut table = file.unwrap_or_default();
    table.extend(given);
    table
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
}

fn required<T: Clone>(value: &Option<T>, flag: &str) -> Result<T> {
    value
        .clone()
        .ok_or_else(|| Error::Config(format!("{flag} is required")))
}

fn check_seed(seed: Option<u64>, flag: &str) -> Result<()> {
    match seed {
        Some(s) if s > MAX_SEED => Err(Error::Config(format!("{flag} must be at most {MAX_SEED}"))),
        _ => Ok(()),
    }
}

impl SimulateArgs {
    fn resolved(mut self) -> Result<Self> {
        let d = SimScenario::default();
        self.n.get_or_insert(if self.panel { 1000 } else { d.n });
        self.p.get_or_insert(d.p);
        self.noise.get_or_insert(d.noise);
        self.lod_q.get_or_insert(d.lod_quantile);
        self.replicates.get_or_insert(1);
        self.seed.get_or_insert(0);
        self.sparse_prob.get_or_insert(d.sparse_prob);
        required(&self.out, "--out")?;
        check_seed(self.seed, "--seed")?;
        Ok(self)
    }

    /// Scenario cells this invocation covers, each with its replicate seeds.
    pub fn scenarios(&self) -> Result<Vec<SimScenario>> {
        let base = SimScenario {
            n: required(&self.n, "--n")?,
            sparse_prob: required(&self.sparse_prob, "--sparse-prob")?,
            ..SimScenario::default()
        };
        let cells: Vec<(usize, NoiseKind, f64)> = if self.paper_grid {
            GRID_SIZES
                .iter()
                .flat_map(|&p| {
                    NoiseKind::ALL
                        .into_iter()
                        .flat_map(move |k| GRID_QUANTILES.map(|q| (p, k, q)))
                })
                .collect()
        } else {
            vec![(
                required(&self.p, "--p")?,
                required(&self.noise, "--noise")?,
                required(&self.lod_q, "--lod-q")?,
            )]
        };
        let master = required(&self.seed, "--seed")?;
        let replicates = required(&self.replicates, "--replicates")?;
        if replicates == 0 {
            return Err(Error::Config("--replicates must be at least 1".into()));
        }
        let mut out = Vec::new();
        for (p, noise, q) in cells {
            for i in 0..replicates {
                let s = SimScenario {
                    p,
                    noise,
                    lod_quantile: q,
                    seed: derive_seed(master, i as u64),
                    replicate: i + 1,
                    ..base.clone()
                };
                s.validate()?;
                out.push(s);
            }
        }
        Ok(out)
    }
}

/// Directory of one simulated replicate below the output root.
pub fn replicate_dir(root: &Path, s: &SimScenario) -> PathBuf {
    root.join(s.label()).join(format!("rep{:03}", s.replicate))
}

fn cmd_simulate(a: &SimulateArgs, manifest: &mut RunManifest) -> Result<PathBuf> {
    let root = required(&a.out, "--out")?;
    let master = required(&a.seed, "--seed")?;
    manifest.seeds.push(master);
    if a.panel {
        let panel = gen_panel(required(&a.n, "--n")?, master)?;
        let dir = root.join("panel");
        write_panel(&panel, &dir)?;
        manifest.outputs.push(dir);
        return Ok(root);
    }
    let scenarios = a.scenarios()?;
    scenarios
        .par_iter()
        .map(|s| gen_dataset(s).and_then(|ds| write_dataset(&ds, &replicate_dir(&root, s))))
        .collect::<Result<Vec<()>>>()?;
    let reps = required(&a.replicates, "--replicates")?;
    manifest
        .seeds
        .extend(scenarios.iter().take(reps).map(|s| s.seed));
    manifest.outputs = scenarios.iter().map(|s| replicate_dir(&root, s)).collect();
    Ok(root)
}

/// Reads a dataset directory (`X.csv` with companions) or a matrix CSV,
/// picking the companion form whenever a `*.status.csv` sits next to it.
pub fn read_input(path: &Path, lod_row: bool) -> Result<MaskedMatrix> {
    let file = if path.is_dir() {
        path.join(OBSERVED_FILE)
    } else {
        path.to_path_buf()
    };
    let schema = if crate::io::companion_path(&file, "status").exists() {
        MatrixSchema::companion()
    } else if lod_row {
        MatrixSchema::lod_row()
    } else {
        MatrixSchema::plain()
    };
    read_matrix_csv(&file, &schema)
}

impl SolveArgs {
    fn resolved(mut self) -> Result<Self> {
        let d = PcpConfig::new(1);
        let cv = CvConfig::default();
        required(&self.input, "input")?;
        required(&self.out, "--out")?;
        if self.rank.is_none() && !self.cv {
            return Err(Error::Config("one of --rank or --cv is required".into()));
        }
        if self.cv {
            self.cv_repeats.get_or_insert(cv.repeats);
            self.cv_holdout.get_or_insert(cv.holdout_fraction);
            self.cv_max_rank
                .get_or_insert(*cv.rank_grid.last().expect("default grid"));
            self.cv_seed.get_or_insert(cv.seed);
        }
        check_seed(self.cv_seed, "--cv-seed")?;
        self.rho.get_or_insert(d.rho);
        self.tol.get_or_insert(d.tol);
        self.max_iter.get_or_insert(d.max_iter);
        self.polish_passes.get_or_insert(d.final_polish_passes);
        Ok(self)
    }

    fn solver_config(&self, rank: usize) -> PcpConfig {
        let d = PcpConfig::new(rank);
        PcpConfig {
            lambda: self.lambda,
            mu: self.mu,
            rho: self.rho.unwrap_or(d.rho),
            tol: self.tol.unwrap_or(d.tol),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            final_polish_passes: self.polish_passes.unwrap_or(d.final_polish_passes),
            ..d
        }
    }
}

fn cmd_solve(a: &SolveArgs, manifest: &mut RunManifest) -> Result<PathBuf> {
    let input = required(&a.input, "input")?;
    let out = required(&a.out, "--out")?;
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut x = read_input(&input, a.lod_row)?;
    manifest.inputs.push(input);
    if a.standardize {
        x = x.standardize_columns()?;
        let scale = x.scale().expect("set by standardize_columns");
        let scale = DMatrix::from_row_slice(1, scale.len(), scale);
        write_matrix_csv(&scale, x.column_names(), &out.join("scale.csv"))?;
    }
    let (n, p) = x.shape();

    let rank = if a.cv {
        let max_rank = required(&a.cv_max_rank, "--cv-max-rank")?.min(n.min(p));
        let cv = CvConfig {
            rank_grid: (1..=max_rank).collect(),
            holdout_fraction: required(&a.cv_holdout, "--cv-holdout")?,
            repeats: required(&a.cv_repeats, "--cv-repeats")?,
            seed: required(&a.cv_seed, "--cv-seed")?,
        };
        manifest.seeds.push(cv.seed);
        let report = cv_select_rank(&x, &a.solver_config(1), &cv)?;
        write_cv_report(&report, &out)?;
        manifest.results.insert(
            "selected_rank".into(),
            toml::Value::Integer(report.selected_rank as i64),
        );
        report.selected_rank
    } else {
        required(&a.rank, "--rank")?
    };

    let cfg = a.solver_config(rank);
    let d = match solve(&x, &cfg) {
        Ok(d) => d,
        Err(e) => {
            write_text(
                &out.join("diagnostics.toml"),
                &format!("status = \"failed\"\nerror = {:?}\n", e.to_string()),
            )?;
            return Err(e);
        }
    };
    write_decomposition(&d, &cfg, &x, &out)?;
    manifest
        .results
        .insert("rank".into(), toml::Value::Integer(rank as i64));
    manifest.results.insert(
        "iterations".into(),
        toml::Value::Integer(d.iterations() as i64),
    );
    manifest
        .results
        .insert("converged".into(), toml::Value::Boolean(d.converged()));

    if let Some(k) = a.patterns {
        let names = x.column_names().to_vec();
        let model = extract_patterns(&d.low_rank, k)?;
        write_patterns(&model, &names, &out)?;
        let table = classify_sparse(&d.sparse, &x, &d.low_rank)?;
        write_event_classes(&table, &d.sparse, &names, &out.join("sparse_events.csv"))?;
        write_event_histogram(&table, &out.join("sparse_histogram.csv"))?;
        write_thresholds(&table, &names, &out.join("sparse_thresholds.csv"))?;
        let stats = sparsity_stats(&table, None)?;
        write_records(
            &out.join("sparse_summary.csv"),
            &[
                "non_null_fraction",
                "non_null_fraction_observed",
                "high_fraction",
                "low_fraction",
            ],
            &[vec![
                format_f64(stats.non_null_fraction),
                format_f64(stats.non_null_fraction_observed),
                format_f64(stats.high_fraction),
                format_f64(stats.low_fraction),
            ]],
        )?;
    }
    manifest.outputs.push(out.clone());
    Ok(out)
}

/// `L.csv`, `S.csv`, the per-iteration `trace.csv` and `diagnostics.toml`.
pub fn write_decomposition(
    d: &Decomposition,
    cfg: &PcpConfig,
    x: &MaskedMatrix,
    out: &Path,
) -> Result<()> {
    let names = x.column_names();
    write_matrix_csv(&d.low_rank, names, &out.join("L.csv"))?;
    write_matrix_csv(&d.sparse, names, &out.join("S.csv"))?;
    let trace: Vec<Vec<String>> = d
        .diagnostics
        .objective_trace
        .iter()
        .zip(&d.diagnostics.primal_residual_trace)
        .enumerate()
        .map(|(i, (o, r))| vec![(i + 1).to_string(), format_f64(*o), format_f64(*r)])
        .collect();
    write_records(
        &out.join("trace.csv"),
        &["iteration", "objective", "primal_residual"],
        &trace,
    )?;
    let (n, p) = x.shape();
    let text = format!(
        "status = \"{}\"\nrank = {}\nlambda = {}\nmu = {}\niterations = {}\nconverged = {}\nobjective = {}\neffective_rank = {}\n",
        if d.converged() { "converged" } else { "max_iter" },
        cfg.rank,
        format_f64(cfg.lambda_for(n)),
        format_f64(cfg.mu_for(p)),
        d.iterations(),
        d.converged(),
        format_f64(d.objective),
        d.effective_rank,
    );
    write_text(&out.join("diagnostics.toml"), &text)
}

impl PcaArgs {
    fn resolved(mut self) -> Result<Self> {
        required(&self.input, "input")?;
        required(&self.out, "--out")?;
        self.variance.get_or_insert(DEFAULT_VARIANCE);
        Ok(self)
    }
}

fn cmd_pca(a: &PcaArgs, manifest: &mut RunManifest) -> Result<PathBuf> {
    let input = required(&a.input, "input")?;
    let out = required(&a.out, "--out")?;
    let x = read_input(&input, a.lod_row)?;
    manifest.inputs.push(input);
    if x.count(EntryStatus::BelowLod) == 0 && x.count(EntryStatus::Missing) == 0 {
        eprintln!("pca: all entries observed, no imputation performed");
    }
    let model = fit_pca(&impute_lod(&x)?, required(&a.variance, "--variance")?)?;
    write_pca(&model, x.column_names(), &out)?;
    manifest.results.insert(
        "k_selected".into(),
        toml::Value::Integer(model.k_selected as i64),
    );
    manifest.outputs.push(out.clone());
    Ok(out)
}

/// Which fitted matrix a method directory holds, judged by its manifest.
pub fn read_estimate(dir: &Path) -> Result<(String, DMatrix<f64>)> {
    let manifest = RunManifest::read(&dir.join(MANIFEST_FILE))?;
    let (method, file) = match manifest.command.as_str() {
        "solve" => (METHOD_PCP, "L.csv"),
        "pca" => (METHOD_PCA, "reconstruction.csv"),
        other => {
            return Err(Error::Config(format!(
                "{} holds `{other}` output, expected solve or pca",
                dir.display()
            )))
        }
    };
    let (m, _) = read_dense_csv(&dir.join(file))?;
    Ok((method.into(), m))
}

/// Overall (and optionally stratified) relative error against the noise-free
/// matrix, plus left and right singular-vector errors at the true rank.
pub fn evaluate_estimate(
    truth: &crate::sim::DatasetTruth,
    method: &str,
    estimate: &DMatrix<f64>,
    with_strata: bool,
) -> Result<Vec<MetricRecord>> {
    if estimate.shape() != truth.clean.shape() {
        return Err(Error::Shape(format!(
            "{method} estimate is {}x{}, truth is {}x{}",
            estimate.nrows(),
            estimate.ncols(),
            truth.clean.nrows(),
            truth.clean.ncols()
        )));
    }
    let label = truth.scenario.label();
    let rep = truth.scenario.replicate;
    let record = |stratum: &str, v: f64| MetricRecord::new(&label, method, stratum, rep, v);
    let mut out = vec![record(
        STRATUM_OVERALL,
        relative_error(&truth.clean, estimate, None)?,
    )];
    if with_strata {
        let (above, below) = strata(&truth.observed);
        for (name, mask) in [(STRATUM_ABOVE, &above), (STRATUM_BELOW, &below)] {
            if mask.iter().any(|&b| b) {
                out.push(record(
                    name,
                    relative_error(&truth.clean, estimate, Some(mask))?,
                ));
            }
        }
    }
    let k = truth.scenario.r_true;
    for (side, tag) in [(Side::Left, "left"), (Side::Right, "right")] {
        match eigenvector_error(&truth.clean, estimate, k, side) {
            Ok(e) => {
                out.push(record(&format!("eigen_{tag}"), e.sign_aligned));
                out.push(record(&format!("eigen_{tag}_procrustes"), e.procrustes));
            }
            Err(Error::UndefinedMetric(msg)) => eprintln!("evaluate: {method} {label}: {msg}"),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn cmd_evaluate(a: &EvaluateArgs, manifest: &mut RunManifest) -> Result<PathBuf> {
    let truth_dir = required(&a.truth, "truth")?;
    let out = required(&a.out, "--out")?;
    if a.methods.is_empty() {
        return Err(Error::Config(
            "at least one method directory is required".into(),
        ));
    }
    let truth = read_dataset(&truth_dir)?;
    let mut records = Vec::new();
    for dir in &a.methods {
        let (method, estimate) = read_estimate(dir)?;
        records.extend(evaluate_estimate(&truth, &method, &estimate, a.strata)?);
    }
    let file = out.join(METRICS_FILE);
    write_metrics(&records, &file)?;
    manifest.inputs.push(truth_dir);
    manifest.inputs.extend(a.methods.iter().cloned());
    manifest.outputs.push(file);
    Ok(out)
}

fn cmd_report(a: &ReportArgs, manifest: &mut RunManifest) -> Result<PathBuf> {
    let out = required(&a.out, "--out")?;
    if a.metrics.is_empty() && a.patterns.is_none() {
        return Err(Error::Config(
            "nothing to report: pass metrics files or --patterns".into(),
        ));
    }
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut records = Vec::new();
    for path in &a.metrics {
        let file = if path.is_dir() {
            path.join(METRICS_FILE)
        } else {
            path.clone()
        };
        records.extend(read_metrics(&file)?);
        manifest.inputs.push(path.clone());
    }
    if !a.metrics.is_empty() {
        if records.is_empty() {
            return Err(Error::Config("metrics files contain no rows".into()));
        }
        write_summary(&records, &out.join("summary.csv"))?;
        for (stratum, table) in [
            (STRATUM_OVERALL, "table_overall.csv"),
            (STRATUM_ABOVE, "table_above_lod.csv"),
            (STRATUM_BELOW, "table_below_lod.csv"),
            ("eigen_left", "table_eigen_left.csv"),
            ("eigen_right", "table_eigen_right.csv"),
        ] {
            if records.iter().any(|r| r.stratum == stratum) {
                write_layout_table(&records, stratum, &out.join(table))?;
                match plot_boxplots(
                    &records,
                    stratum,
                    &out.join(format!("boxplot_{stratum}.svg")),
                ) {
                    Ok(()) | Err(Error::InsufficientData(_)) => {}
                    Err(e) => return Err(e),
                }
            }
        }
    }
    if let Some(dir) = &a.patterns {
        let (names, loadings) = read_loadings(&dir.join("loadings.csv"))?;
        let (explained, _) = read_dense_csv(&dir.join("explained.csv"))?;
        let shares: Vec<f64> = explained.column(2).iter().copied().collect();
        plot_loadings(&loadings, &shares, &names, &out.join("loadings.svg"))?;
        let (event_names, classes) = read_event_classes(&dir.join("sparse_events.csv"))?;
        plot_sparse_events(&classes, &event_names, &out.join("sparse_events.svg"))?;
        manifest.inputs.push(dir.clone());
    }
    manifest.outputs.push(out.clone());
    Ok(out)
}

/// Entry point for the binary: runs and maps errors to exit codes.
pub fn main_exit_code() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
