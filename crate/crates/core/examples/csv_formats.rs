//! The two on-disk forms of a censored matrix: a single file with an LOD row
//! and `<LOD` cells, and a values file with status and limit companions.

use pcplod::data::EntryStatus;
use pcplod::io::{read_matrix_csv, write_masked_csv, MatrixSchema};

const LOD_ROW_CSV: &str = "\
pcb153,pcb180,tcdd
0.05,0.05,0.002
0.41,0.32,<LOD
<LOD,0.11,0.004
0.87,NA,0.009
";

fn main() -> pcplod::error::Result<()> {
    let dir = tempfile::tempdir().expect("temporary directory");
    let single = dir.path().join("serum.csv");
    std::fs::write(&single, LOD_ROW_CSV).expect("write example input");

    let x = read_matrix_csv(&single, &MatrixSchema::lod_row())?;
    for i in 0..x.nrows() {
        let row: Vec<String> = (0..x.ncols())
            .map(|j| match x.status(i, j) {
                EntryStatus::Observed => format!("{:>8}", x.observed(i, j).unwrap_or_default()),
                EntryStatus::BelowLod => format!("{:>8}", format!("<{}", x.delta(i, j))),
                EntryStatus::Missing => format!("{:>8}", "."),
            })
            .collect();
        println!("{}", row.join(" "));
    }

    let companion = dir.path().join("X.csv");
    write_masked_csv(&x, &companion)?;
    for name in ["X.csv", "X.status.csv", "X.delta.csv"] {
        let text = std::fs::read_to_string(dir.path().join(name)).expect("read back");
        println!("--- {name}\n{text}");
    }
    let back = read_matrix_csv(&companion, &MatrixSchema::companion())?;
    assert_eq!(back.status_matrix(), x.status_matrix());
    Ok(())
}
