//! A small simulation study: several replicates per cell, both methods,
//! tidy metrics, a percentile table and box plots.
//!
//! ```text
//! cargo run --release --example study -- /tmp/pcplod-study
//! ```

use std::path::PathBuf;

use pcplod::cli::evaluate_estimate;
use pcplod::pca::{fit_pca, impute_lod, reconstruct, DEFAULT_VARIANCE};
use pcplod::report::{layout_table, plot_boxplots, write_metrics, write_summary, STRATUM_OVERALL};
use pcplod::rng::derive_seed;
use pcplod::sim::{gen_dataset, DatasetTruth, NoiseKind, SimScenario};
use pcplod::solver::{solve, PcpConfig};

const REPLICATES: usize = 3;

fn main() -> pcplod::error::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("pcplod-study"));
    std::fs::create_dir_all(&out).expect("create output directory");

    let mut records = Vec::new();
    for noise in NoiseKind::ALL {
        for q in [0.25, 0.5] {
            for rep in 0..REPLICATES {
                let scenario = SimScenario {
                    n: 200,
                    replicate: rep + 1,
                    ..SimScenario::new(16, noise, q, derive_seed(2024, rep as u64))
                };
                let ds = gen_dataset(&scenario)?;
                let truth = DatasetTruth {
                    scenario,
                    observed: ds.censored.clone(),
                    clean: ds.clean.clone(),
                    sparse_truth: ds.sparse_truth.clone(),
                };
                let pcp = solve(&ds.censored, &PcpConfig::new(4))?;
                records.extend(evaluate_estimate(&truth, "pcp", &pcp.low_rank, true)?);
                let model = fit_pca(&impute_lod(&ds.censored)?, DEFAULT_VARIANCE)?;
                records.extend(evaluate_estimate(
                    &truth,
                    "pca",
                    &reconstruct(&model, model.k_selected)?,
                    true,
                )?);
            }
            eprintln!("{} {q} done", noise.name());
        }
    }

    write_metrics(&records, &out.join("metrics.csv"))?;
    write_summary(&records, &out.join("summary.csv"))?;
    plot_boxplots(&records, STRATUM_OVERALL, &out.join("boxplot_overall.svg"))?;

    let (header, rows) = layout_table(&records, STRATUM_OVERALL)?;
    println!("{}", header.join("\t"));
    for row in rows {
        let cells: Vec<String> = row
            .iter()
            .map(|c| c.parse::<f64>().map_or(c.clone(), |v| format!("{v:.3}")))
            .collect();
        println!("{}", cells.join("\t"));
    }
    println!("wrote {}", out.display());
    Ok(())
}
