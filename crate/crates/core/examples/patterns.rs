//! Application workflow on the bundled 21-chemical panel: standardize,
//! decompose, pull out three patterns and label unusual exposures.
//!
//! ```text
//! cargo run --release --example patterns -- /tmp/pcplod-panel
//! ```

use std::path::PathBuf;

use pcplod::patterns::{classify_sparse, extract_patterns, sparsity_stats, write_event_histogram};
use pcplod::report::{plot_loadings, plot_sparse_events};
use pcplod::sim::gen_panel;
use pcplod::solver::{solve, PcpConfig};

fn main() -> pcplod::error::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("pcplod-panel"));
    std::fs::create_dir_all(&out).expect("create output directory");

    let panel = gen_panel(1000, 5)?;
    let x = panel.observed.standardize_columns()?;
    let names = x.column_names().to_vec();

    let d = solve(&x, &PcpConfig::new(3))?;
    let model = extract_patterns(&d.low_rank, 3)?;
    for (k, share) in model.explained_share.iter().enumerate() {
        let top = model
            .right_vectors
            .column(k)
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(j, _)| names[j].as_str())
            .unwrap_or("-");
        println!(
            "pattern {}: {:.1}% of variance, heaviest loading {top}",
            k + 1,
            100.0 * share
        );
    }

    let events = classify_sparse(&d.sparse, &x, &d.low_rank)?;
    let stats = sparsity_stats(&events, None)?;
    println!(
        "non-null sparse entries: {:.1}% ({:.1}% high, {:.1}% low)",
        100.0 * stats.non_null_fraction,
        100.0 * stats.high_fraction,
        100.0 * stats.low_fraction
    );

    let shares: Vec<f64> = model.explained_share.iter().copied().collect();
    plot_loadings(
        &model.right_vectors,
        &shares,
        &names,
        &out.join("loadings.svg"),
    )?;
    plot_sparse_events(&events.classes, &names, &out.join("sparse_events.svg"))?;
    write_event_histogram(&events, &out.join("sparse_histogram.csv"))?;
    println!("wrote figures to {}", out.display());
    Ok(())
}
