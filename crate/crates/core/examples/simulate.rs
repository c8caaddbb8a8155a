//! Draw one simulated dataset, inspect it, and write it to disk.
//!
//! ```text
//! cargo run --example simulate -- /tmp/pcplod-sim
//! ```

use std::path::PathBuf;

use pcplod::data::EntryStatus;
use pcplod::sim::{gen_dataset, write_dataset, NoiseKind, SimScenario};

fn main() -> pcplod::error::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("pcplod-sim"));

    let scenario = SimScenario::new(16, NoiseKind::Sparse, 0.5, 42);
    let ds = gen_dataset(&scenario)?;
    let x = &ds.censored;

    println!("scenario {}: {}x{}", scenario.label(), x.nrows(), x.ncols());
    println!("below LOD: {}", x.count(EntryStatus::BelowLod));
    println!(
        "spikes:    {}",
        ds.sparse_truth.iter().filter(|&&v| v != 0.0).count()
    );
    println!("loadings (pattern x chemical):{:.2}", ds.loadings);

    write_dataset(&ds, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
