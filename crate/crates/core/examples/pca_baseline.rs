//! The comparison method: impute censored values as LOD/√2, then keep the
//! leading principal components that explain 80% of the variance.

use pcplod::metrics::relative_error;
use pcplod::pca::{fit_pca, impute_lod, reconstruct, DEFAULT_VARIANCE};
use pcplod::sim::{gen_dataset, NoiseKind, SimScenario};
use pcplod::solver::{solve, PcpConfig};

fn main() -> pcplod::error::Result<()> {
    for q in [0.25, 0.5, 0.75] {
        let ds = gen_dataset(&SimScenario::new(16, NoiseKind::Low, q, 11))?;
        let model = fit_pca(&impute_lod(&ds.censored)?, DEFAULT_VARIANCE)?;
        let pca = reconstruct(&model, model.k_selected)?;
        let pcp = solve(&ds.censored, &PcpConfig::new(4))?;
        println!(
            "{:>3}% < LOD: PCA keeps {} components, error {:.3}; PCP-LOD error {:.3}",
            (q * 100.0) as u32,
            model.k_selected,
            relative_error(&ds.clean, &pca, None)?,
            relative_error(&ds.clean, &pcp.low_rank, None)?,
        );
    }
    Ok(())
}
