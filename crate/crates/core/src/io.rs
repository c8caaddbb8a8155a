//! CSV reading and writing for matrices and masked matrices.
//!
//! A masked matrix is stored either as a single file where censored cells hold
//! the token `<LOD` and the first record after the header carries per-column
//! limits, or as three files sharing a stem: `X.csv` (values, blank where not
//! observed), `X.status.csv` (tokens `O`, `L`, `M`) and `X.delta.csv` (limits).

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::data::{EntryStatus, MaskedMatrix};
use crate::error::{Error, Result};

pub const LOD_TOKEN: &str = "<LOD";

/// How limits of detection are encoded in a matrix file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LodEncoding {
    /// No LOD metadata; `<LOD` cells are a schema error.
    #[default]
    None,
    /// First record after the header holds one LOD per column (blank = none).
    LodRow,
    /// Companion `*.status.csv` and `*.delta.csv` files next to the values file.
    Companion,
}

/// Interpretation of empty cells in a single-file matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmptyCell {
    #[default]
    Missing,
    /// Empty cells in a column that has an LOD are censored; elsewhere missing.
    BelowLodWhereColumnHasLod,
}

#[derive(Debug, Clone, Default)]
pub struct MatrixSchema {
    /// Expected header; `None` accepts any header.
    pub columns: Option<Vec<String>>,
    pub lod: LodEncoding,
    pub empty: EmptyCell,
}

impl MatrixSchema {
    pub fn plain() -> Self {
        Self::default()
    }

    pub fn lod_row() -> Self {
        Self {
            lod: LodEncoding::LodRow,
            ..Self::default()
        }
    }

    pub fn companion() -> Self {
        Self {
            lod: LodEncoding::Companion,
            ..Self::default()
        }
    }
}

/// `X.csv` → `X.status.csv`.
pub fn companion_path(path: &Path, kind: &str) -> PathBuf {
    let stem = path
        .file_name()
        .and_then(|s| s.to_str())
        .map(|s| s.strip_suffix(".csv").unwrap_or(s))
        .unwrap_or("matrix");
    path.with_file_name(format!("{stem}.{kind}.csv"))
}

/// Decimal text with at least 17 significant digits; exact zero is `0`.
pub fn format_f64(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..15).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.16e}")
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let header = rdr
        .headers()
        .map_err(|e| Error::csv(path, e))?
        .iter()
        .map(str::to_string)
        .collect::<Vec<_>>();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(Table { header, rows })
}

fn parse_number(path: &Path, row: usize, column: usize, cell: &str) -> Result<f64> {
    cell.parse::<f64>().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        row,
        column,
        message: format!("cannot parse `{cell}` as a number"),
    })
}

fn is_missing_token(cell: &str) -> bool {
    matches!(cell, "NA" | "NaN" | "nan")
}

/// Reads a plain numeric matrix with a header row. Returns the matrix and header.
pub fn read_dense_csv(path: &Path) -> Result<(DMatrix<f64>, Vec<String>)> {
    let table = read_table(path)?;
    let p = table.header.len();
    let n = table.rows.len();
    let mut m = DMatrix::zeros(n, p);
    for (i, row) in table.rows.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            // header is line 1
            m[(i, j)] = parse_number(path, i + 2, j + 1, cell)?;
        }
    }
    Ok((m, table.header))
}

pub fn read_matrix_csv(path: &Path, schema: &MatrixSchema) -> Result<MaskedMatrix> {
    let table = read_table(path)?;
    if let Some(expected) = &schema.columns {
        if *expected != table.header {
            return Err(Error::Schema(format!(
                "header {:?} does not match expected {:?}",
                table.header, expected
            )));
        }
    }
    let p = table.header.len();
    match schema.lod {
        LodEncoding::Companion => read_companion(path, table),
        LodEncoding::None | LodEncoding::LodRow => {
            let (lods, body_offset) = if schema.lod == LodEncoding::LodRow {
                let first = table.rows.first().ok_or_else(|| {
                    Error::Schema(format!(
                        "{}: LOD row expected but file has no records",
                        path.display()
                    ))
                })?;
                let lods = first
                    .iter()
                    .enumerate()
                    .map(|(j, cell)| {
                        if cell.is_empty() || is_missing_token(cell) {
                            Ok(None)
                        } else {
                            parse_number(path, 2, j + 1, cell).map(Some)
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                (lods, 1)
            } else {
                (vec![None; p], 0)
            };
            let body = &table.rows[body_offset..];
            let n = body.len();
            if n == 0 {
                return Err(Error::Shape(format!("{}: no data rows", path.display())));
            }
            let mut values = DMatrix::from_element(n, p, f64::NAN);
            let mut status = DMatrix::from_element(n, p, EntryStatus::Observed);
            let mut delta = DMatrix::zeros(n, p);
            for (i, row) in body.iter().enumerate() {
                let line = i + 2 + body_offset;
                for (j, cell) in row.iter().enumerate() {
                    let lod = lods[j];
                    if let Some(d) = lod {
                        delta[(i, j)] = d.max(0.0);
                    }
                    let censored =
                        |status: &mut DMatrix<EntryStatus>, delta: &mut DMatrix<f64>| match lod {
                            Some(d) if d > 0.0 && d.is_finite() => {
                                status[(i, j)] = EntryStatus::BelowLod;
                                delta[(i, j)] = d;
                                Ok(())
                            }
                            _ => Err(Error::Schema(format!(
                                "{} row {line}, column {}: censored cell without a positive LOD",
                                path.display(),
                                j + 1
                            ))),
                        };
                    if cell == LOD_TOKEN {
                        censored(&mut status, &mut delta)?;
                    } else if cell.is_empty() {
                        match (schema.empty, lod) {
                            (EmptyCell::BelowLodWhereColumnHasLod, Some(_)) => {
                                censored(&mut status, &mut delta)?
                            }
                            _ => status[(i, j)] = EntryStatus::Missing,
                        }
                    } else if is_missing_token(cell) {
                        status[(i, j)] = EntryStatus::Missing;
                    } else {
                        let v = parse_number(path, line, j + 1, cell)?;
                        if v < 0.0 {
                            return Err(Error::Domain(format!(
                                "{} row {line}, column {}: negative concentration {v}",
                                path.display(),
                                j + 1
                            )));
                        }
                        values[(i, j)] = v;
                    }
                }
            }
            MaskedMatrix::new(values, status, delta, table.header)
        }
    }
}

fn read_companion(path: &Path, table: Table) -> Result<MaskedMatrix> {
    let p = table.header.len();
    let n = table.rows.len();
    let status_path = companion_path(path, "status");
    let delta_path = companion_path(path, "delta");
    let status_table = read_table(&status_path)?;
    let delta_table = read_table(&delta_path)?;
    for (name, t) in [(&status_path, &status_table), (&delta_path, &delta_table)] {
        if t.header != table.header || t.rows.len() != n {
            return Err(Error::Schema(format!(
                "{} does not match the shape or header of {}",
                name.display(),
                path.display()
            )));
        }
    }
    let mut values = DMatrix::from_element(n, p, f64::NAN);
    let mut status = DMatrix::from_element(n, p, EntryStatus::Observed);
    let mut delta = DMatrix::zeros(n, p);
    for i in 0..n {
        let line = i + 2;
        for j in 0..p {
            let token = &status_table.rows[i][j];
            let s = EntryStatus::from_token(token).ok_or_else(|| Error::Parse {
                path: status_path.clone(),
                row: line,
                column: j + 1,
                message: format!("unknown status token `{token}`"),
            })?;
            status[(i, j)] = s;
            let dcell = &delta_table.rows[i][j];
            if !dcell.is_empty() {
                delta[(i, j)] = parse_number(&delta_path, line, j + 1, dcell)?;
            }
            if s == EntryStatus::Observed {
                let v = parse_number(path, line, j + 1, &table.rows[i][j])?;
                if v < 0.0 {
                    return Err(Error::Domain(format!(
                        "{} row {line}, column {}: negative concentration {v}",
                        path.display(),
                        j + 1
                    )));
                }
                values[(i, j)] = v;
            }
        }
    }
    MaskedMatrix::new(values, status, delta, table.header)
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))
}

fn write_rows<F>(path: &Path, header: &[String], n: usize, cell: F) -> Result<()>
where
    F: Fn(usize, usize) -> String,
{
    let mut w = create(path)?;
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    let p = header.len();
    let mut record = Vec::with_capacity(p);
    for i in 0..n {
        record.clear();
        record.extend((0..p).map(|j| cell(i, j)));
        w.write_record(&record).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_matrix_csv(m: &DMatrix<f64>, column_names: &[String], path: &Path) -> Result<()> {
    if column_names.len() != m.ncols() {
        return Err(Error::Shape(format!(
            "{} column names for {} columns",
            column_names.len(),
            m.ncols()
        )));
    }
    write_rows(path, column_names, m.nrows(), |i, j| format_f64(m[(i, j)]))
}

/// Writes the three-file form: values, `*.status.csv`, `*.delta.csv`.
pub fn write_masked_csv(m: &MaskedMatrix, path: &Path) -> Result<()> {
    let names = m.column_names();
    write_rows(path, names, m.nrows(), |i, j| {
        m.observed(i, j).map(format_f64).unwrap_or_default()
    })?;
    write_rows(&companion_path(path, "status"), names, m.nrows(), |i, j| {
        m.status(i, j).token().to_string()
    })?;
    write_rows(&companion_path(path, "delta"), names, m.nrows(), |i, j| {
        format_f64(m.delta(i, j))
    })
}

/// Writes rows of string records under a header.
pub fn write_records(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
