//! Choose the rank by repeatedly hiding 20% of the observed entries and
//! scoring how well each candidate rank predicts them.

use pcplod::cv::{cv_select_rank, CvConfig};
use pcplod::sim::{gen_dataset, NoiseKind, SimScenario};
use pcplod::solver::PcpConfig;

fn main() -> pcplod::error::Result<()> {
    let scenario = SimScenario {
        n: 200,
        ..SimScenario::new(16, NoiseKind::Low, 0.25, 3)
    };
    let ds = gen_dataset(&scenario)?;

    let cv = CvConfig {
        rank_grid: (1..=6).collect(),
        repeats: 5,
        seed: 1,
        ..CvConfig::default()
    };
    let report = cv_select_rank(&ds.censored, &PcpConfig::new(1), &cv)?;

    println!("rank  mean error  sd");
    for (g, r) in report.rank_grid.iter().enumerate() {
        println!(
            "{r:>4}  {:>10.5}  {:.5}",
            report.mean_errors[g], report.sd_errors[g]
        );
    }
    println!(
        "selected rank {} (true {})",
        report.selected_rank, scenario.r_true
    );
    Ok(())
}
