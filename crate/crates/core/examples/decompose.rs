//! Split a censored matrix into a non-negative low-rank part and a sparse
//! part, then compare the low-rank part with the noise-free truth.

use pcplod::metrics::relative_error;
use pcplod::patterns::strata;
use pcplod::sim::{gen_dataset, NoiseKind, SimScenario};
use pcplod::solver::{solve, PcpConfig};

fn main() -> pcplod::error::Result<()> {
    let ds = gen_dataset(&SimScenario::new(16, NoiseKind::Low, 0.25, 7))?;
    let x = &ds.censored;

    let d = solve(x, &PcpConfig::new(4))?;
    println!(
        "{} iterations, converged: {}, objective {:.4}, effective rank {}",
        d.iterations(),
        d.converged(),
        d.objective,
        d.effective_rank
    );

    let (above, below) = strata(x);
    println!(
        "relative error, all entries: {:.4}",
        relative_error(&ds.clean, &d.low_rank, None)?
    );
    println!(
        "  above the LOD:             {:.4}",
        relative_error(&ds.clean, &d.low_rank, Some(&above))?
    );
    println!(
        "  below the LOD:             {:.4}",
        relative_error(&ds.clean, &d.low_rank, Some(&below))?
    );
    println!("min of L: {}", d.low_rank.min());

    let trace = &d.diagnostics.objective_trace;
    for i in (0..trace.len()).step_by((trace.len() / 8).max(1)) {
        println!("  iter {:>5}  objective {:.6}", i + 1, trace[i]);
    }
    Ok(())
}
