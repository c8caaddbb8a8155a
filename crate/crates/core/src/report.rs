//! Tidy metric records, percentile summaries and static SVG figures.
//!
//! Metrics are stored one value per row as
//! `scenario,method,stratum,replicate,value`. Summaries use linear
//! interpolation between order statistics (type 7).

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use plotters::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{format_f64, write_records};
use crate::patterns::SparseClass;
use crate::sim::NoiseKind;

pub const METRICS_HEADER: [&str; 5] = ["scenario", "method", "stratum", "replicate", "value"];

pub const STRATUM_OVERALL: &str = "overall";
pub const STRATUM_ABOVE: &str = "above_lod";
pub const STRATUM_BELOW: &str = "below_lod";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub scenario: String,
    pub method: String,
    pub stratum: String,
    pub replicate: usize,
    pub value: f64,
}

impl MetricRecord {
    pub fn new(scenario: &str, method: &str, stratum: &str, replicate: usize, value: f64) -> Self {
        Self {
            scenario: scenario.into(),
            method: method.into(),
            stratum: stratum.into(),
            replicate,
            value,
        }
    }
}

pub fn write_metrics(records: &[MetricRecord], path: &Path) -> Result<()> {
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.scenario.clone(),
                r.method.clone(),
                r.stratum.clone(),
                r.replicate.to_string(),
                format_f64(r.value),
            ]
        })
        .collect();
    write_records(path, &METRICS_HEADER, &rows)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    if headers.iter().ne(METRICS_HEADER) {
        return Err(Error::Schema(format!(
            "{}: expected header {}",
            path.display(),
            METRICS_HEADER.join(",")
        )));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(|e| Error::csv(path, e)))
        .collect()
}

/// Type-7 sample quantile: `h = (m − 1)·prob`, interpolated between the
/// neighbouring order statistics.
pub fn quantile(values: &[f64], prob: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientData(
            "quantile of an empty sample".into(),
        ));
    }
    if !(0.0..=1.0).contains(&prob) {
        return Err(Error::Domain(format!(
            "quantile probability {prob} outside [0, 1]"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quartiles {
    pub count: usize,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Result<Self> {
        Ok(Self {
            count: values.len(),
            q25: quantile(values, 0.25)?,
            median: quantile(values, 0.5)?,
            q75: quantile(values, 0.75)?,
        })
    }
}

/// Percentiles per (scenario, method, stratum), keys in sorted order.
/// Scenario, method and stratum.
pub type SummaryKey = (String, String, String);

pub fn summarize(records: &[MetricRecord]) -> Result<Vec<(SummaryKey, Quartiles)>> {
    let mut groups: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.scenario.clone(), r.method.clone(), r.stratum.clone()))
            .or_default()
            .push(r.value);
    }
    groups
        .into_iter()
        .map(|(k, v)| Ok((k, Quartiles::of(&v)?)))
        .collect()
}

pub fn write_summary(records: &[MetricRecord], path: &Path) -> Result<()> {
    let rows: Vec<Vec<String>> = summarize(records)?
        .into_iter()
        .map(|((scenario, method, stratum), q)| {
            vec![
                scenario,
                method,
                stratum,
                q.count.to_string(),
                format_f64(q.q25),
                format_f64(q.median),
                format_f64(q.q75),
            ]
        })
        .collect();
    write_records(
        path,
        &[
            "scenario", "method", "stratum", "count", "p25", "p50", "p75",
        ],
        &rows,
    )
}

/// Parts of a simulation label such as `p16_low_q25`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ScenarioKey {
    pub p: usize,
    pub noise: NoiseKind,
    pub lod_percent: u32,
}

impl ScenarioKey {
    pub fn parse(label: &str) -> Option<Self> {
        let mut parts = label.split('_');
        let p = parts.next()?.strip_prefix('p')?.parse().ok()?;
        let token = parts.next()?;
        let noise = NoiseKind::ALL.into_iter().find(|k| k.name() == token)?;
        let lod_percent = parts.next()?.strip_prefix('q')?.parse().ok()?;
        parts.next().is_none().then_some(Self {
            p,
            noise,
            lod_percent,
        })
    }
}

/// Rows are noise structure × method, columns a (p25, p50, p75) triple per
/// LOD level; values are pooled over matrix sizes and replicates of one
/// stratum. Records whose scenario is not a simulation label are ignored.
pub fn layout_table(
    records: &[MetricRecord],
    stratum: &str,
) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut cells: BTreeMap<(NoiseKind, String, u32), Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.stratum == stratum) {
        if let Some(key) = ScenarioKey::parse(&r.scenario) {
            cells
                .entry((key.noise, r.method.clone(), key.lod_percent))
                .or_default()
                .push(r.value);
        }
    }
    let mut levels: Vec<u32> = cells.keys().map(|k| k.2).collect();
    levels.sort_unstable();
    levels.dedup();
    let mut rows_keys: Vec<(NoiseKind, String)> =
        cells.keys().map(|k| (k.0, k.1.clone())).collect();
    rows_keys.dedup();

    let mut header = vec!["noise".to_string(), "method".to_string()];
    for q in &levels {
        header.extend(["p25", "p50", "p75"].map(|s| format!("lod{q}_{s}")));
    }
    let mut rows = Vec::new();
    for (noise, method) in rows_keys {
        let mut row = vec![noise.name().to_string(), method.clone()];
        for &q in &levels {
            match cells.get(&(noise, method.clone(), q)) {
                Some(v) => {
                    let s = Quartiles::of(v)?;
                    row.extend([s.q25, s.median, s.q75].map(format_f64));
                }
                None => row.extend(std::iter::repeat_n(String::new(), 3)),
            }
        }
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn write_layout_table(records: &[MetricRecord], stratum: &str, path: &Path) -> Result<()> {
    let (header, rows) = layout_table(records, stratum)?;
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_records(path, &header, &rows)
}

fn plot_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

const METHOD_COLORS: [RGBColor; 4] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
];

/// Box plots of one stratum on a noise × LOD grid of panels, one box per
/// method and matrix size. Whiskers reach the most extreme values within
/// 1.5 IQR of the box.
pub fn plot_boxplots(records: &[MetricRecord], stratum: &str, path: &Path) -> Result<()> {
    type Boxes = BTreeMap<(String, usize), Vec<f64>>;
    let mut cells: BTreeMap<(NoiseKind, u32), Boxes> = BTreeMap::new();
    let mut methods: Vec<String> = Vec::new();
    for r in records.iter().filter(|r| r.stratum == stratum) {
        let Some(key) = ScenarioKey::parse(&r.scenario) else {
            continue;
        };
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
        cells
            .entry((key.noise, key.lod_percent))
            .or_default()
            .entry((r.method.clone(), key.p))
            .or_default()
            .push(r.value);
    }
    if cells.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no simulation metrics for stratum {stratum}"
        )));
    }
    methods.sort();
    let mut noises: Vec<NoiseKind> = cells.keys().map(|k| k.0).collect();
    noises.dedup();
    let mut levels: Vec<u32> = cells.keys().map(|k| k.1).collect();
    levels.sort_unstable();
    levels.dedup();
    let y_max = cells
        .values()
        .flat_map(|g| g.values().flatten())
        .fold(0.0f64, |m, &v| m.max(v))
        * 1.05;
    let y_max = if y_max > 0.0 { y_max } else { 1.0 };

    let root = SVGBackend::new(path, (320 * levels.len() as u32, 260 * noises.len() as u32))
        .into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_error(path, e))?;
    let panels = root.split_evenly((noises.len(), levels.len()));
    for (idx, panel) in panels.iter().enumerate() {
        let noise = noises[idx / levels.len()];
        let level = levels[idx % levels.len()];
        let Some(groups) = cells.get(&(noise, level)) else {
            continue;
        };
        let labels: Vec<&(String, usize)> = groups.keys().collect();
        let mut chart = ChartBuilder::on(panel)
            .caption(format!("{noise} noise, {level}% < LOD"), ("sans-serif", 14))
            .margin(8)
            .x_label_area_size(28)
            .y_label_area_size(44)
            .build_cartesian_2d(-0.5f64..labels.len() as f64 - 0.5, 0.0..y_max)
            .map_err(|e| plot_error(path, e))?;
        chart
            .configure_mesh()
            .disable_x_mesh()
            .x_labels(labels.len().max(1))
            .x_label_formatter(&|x| {
                let i = x.round();
                if (x - i).abs() < 1e-9 && i >= 0.0 && (i as usize) < labels.len() {
                    let (m, p) = labels[i as usize];
                    format!("{m} p{p}")
                } else {
                    String::new()
                }
            })
            .y_desc(stratum)
            .draw()
            .map_err(|e| plot_error(path, e))?;
        for (i, ((method, _), values)) in groups.iter().enumerate() {
            let color = METHOD_COLORS
                [methods.iter().position(|m| m == method).unwrap_or(0) % METHOD_COLORS.len()];
            draw_box(&mut chart, i as f64, values, color).map_err(|e| plot_error(path, e))?;
        }
    }
    root.present().map_err(|e| plot_error(path, e))
}

fn draw_box<DB: DrawingBackend>(
    chart: &mut ChartContext<
        '_,
        DB,
        Cartesian2d<plotters::coord::types::RangedCoordf64, plotters::coord::types::RangedCoordf64>,
    >,
    x: f64,
    values: &[f64],
    color: RGBColor,
) -> std::result::Result<(), DrawingAreaErrorKind<DB::ErrorType>> {
    let Ok(q) = Quartiles::of(values) else {
        return Ok(());
    };
    let iqr = q.q75 - q.q25;
    let low = values
        .iter()
        .copied()
        .filter(|&v| v >= q.q25 - 1.5 * iqr)
        .fold(q.q25, f64::min);
    let high = values
        .iter()
        .copied()
        .filter(|&v| v <= q.q75 + 1.5 * iqr)
        .fold(q.q75, f64::max);
    let w = 0.3;
    chart.draw_series(std::iter::once(Rectangle::new(
        [(x - w, q.q25), (x + w, q.q75)],
        color.mix(0.35).filled(),
    )))?;
    chart.draw_series(std::iter::once(Rectangle::new(
        [(x - w, q.q25), (x + w, q.q75)],
        color.stroke_width(1),
    )))?;
    chart.draw_series(std::iter::once(PathElement::new(
        vec![(x - w, q.median), (x + w, q.median)],
        BLACK.stroke_width(2),
    )))?;
    for (from, to) in [(q.q25, low), (q.q75, high)] {
        chart.draw_series(std::iter::once(PathElement::new(
            vec![(x, from), (x, to)],
            color.stroke_width(1),
        )))?;
        chart.draw_series(std::iter::once(PathElement::new(
            vec![(x - w / 2.0, to), (x + w / 2.0, to)],
            color.stroke_width(1),
        )))?;
    }
    let outliers = values.iter().filter(|&&v| v < low || v > high);
    chart.draw_series(outliers.map(|&v| Circle::new((x, v), 2, color.filled())))?;
    Ok(())
}

/// One bar chart per pattern of its chemical loadings. Each loading vector
/// is signed so that its entries sum to a non-negative value.
pub fn plot_loadings(
    loadings: &DMatrix<f64>,
    shares: &[f64],
    names: &[String],
    path: &Path,
) -> Result<()> {
    let k = shares.len();
    let p = names.len();
    if loadings.shape() != (p, k) {
        return Err(Error::Shape(
            "loadings do not match the chemical names".into(),
        ));
    }
    let root =
        SVGBackend::new(path, ((40 + 28 * p as u32).max(480), 220 * k as u32)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_error(path, e))?;
    for (c, panel) in root.split_evenly((k, 1)).iter().enumerate() {
        let v = loadings.column(c);
        let sign = if v.sum() < 0.0 { -1.0 } else { 1.0 };
        let lo = v.iter().map(|x| x * sign).fold(0.0f64, f64::min);
        let hi = v.iter().map(|x| x * sign).fold(0.0f64, f64::max);
        let pad = 0.05 * (hi - lo).max(1e-12);
        let mut chart = ChartBuilder::on(panel)
            .caption(
                format!("Pattern {} ({:.1}% of variance)", c + 1, 100.0 * shares[c]),
                ("sans-serif", 14),
            )
            .margin(8)
            .x_label_area_size(60)
            .y_label_area_size(48)
            .build_cartesian_2d(-0.5f64..p as f64 - 0.5, (lo - pad)..(hi + pad))
            .map_err(|e| plot_error(path, e))?;
        chart
            .configure_mesh()
            .disable_x_mesh()
            .x_labels(p)
            .x_label_formatter(&|x| {
                let i = x.round();
                if (x - i).abs() < 1e-9 && i >= 0.0 && (i as usize) < p {
                    names[i as usize].clone()
                } else {
                    String::new()
                }
            })
            .x_label_style(
                ("sans-serif", 10)
                    .into_font()
                    .transform(FontTransform::Rotate90),
            )
            .y_desc("loading")
            .draw()
            .map_err(|e| plot_error(path, e))?;
        chart
            .draw_series((0..p).map(|j| {
                let y = sign * v[j];
                Rectangle::new(
                    [(j as f64 - 0.35, 0.0), (j as f64 + 0.35, y)],
                    METHOD_COLORS[0].filled(),
                )
            }))
            .map_err(|e| plot_error(path, e))?;
    }
    root.present().map_err(|e| plot_error(path, e))
}

/// Row order for the event map: most high events first, then most low
/// events, then original order.
pub fn event_row_order(classes: &DMatrix<SparseClass>) -> Vec<usize> {
    let count = |i: usize, c: SparseClass| classes.row(i).iter().filter(|&&v| v == c).count();
    let mut keyed: Vec<(usize, usize, usize)> = (0..classes.nrows())
        .map(|i| (i, count(i, SparseClass::High), count(i, SparseClass::Low)))
        .collect();
    keyed.sort_by(|a, b| b.1.cmp(&a.1).then(b.2.cmp(&a.2)).then(a.0.cmp(&b.0)));
    keyed.into_iter().map(|k| k.0).collect()
}

/// Participants × chemicals map of sparse events: red High, blue Low,
/// white otherwise.
pub fn plot_sparse_events(
    classes: &DMatrix<SparseClass>,
    names: &[String],
    path: &Path,
) -> Result<()> {
    let (n, p) = classes.shape();
    if names.len() != p {
        return Err(Error::Shape(
            "event table does not match the chemical names".into(),
        ));
    }
    let order = event_row_order(classes);
    let root = SVGBackend::new(path, ((80 + 24 * p as u32).max(400), 640)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_error(path, e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Sparse events", ("sans-serif", 16))
        .margin(10)
        .x_label_area_size(70)
        .y_label_area_size(50)
        .build_cartesian_2d((0..p.saturating_sub(1)).into_segmented(), 0f64..n as f64)
        .map_err(|e| plot_error(path, e))?;
    chart
        .configure_mesh()
        .disable_mesh()
        .x_labels(p)
        .x_label_formatter(&|x| match x {
            SegmentValue::CenterOf(j) if *j < p => names[*j].clone(),
            _ => String::new(),
        })
        .x_label_style(
            ("sans-serif", 10)
                .into_font()
                .transform(FontTransform::Rotate90),
        )
        .y_label_formatter(&|y| format!("{y:.0}"))
        .y_desc("participant (sorted by events)")
        .draw()
        .map_err(|e| plot_error(path, e))?;
    let mut cells = Vec::new();
    for (row, &i) in order.iter().enumerate() {
        for j in 0..p {
            let color = match classes[(i, j)] {
                SparseClass::High => RED,
                SparseClass::Low => BLUE,
                SparseClass::Null => continue,
            };
            let y = (n - 1 - row) as f64;
            cells.push(Rectangle::new(
                [
                    (SegmentValue::Exact(j), y),
                    (SegmentValue::Exact(j + 1), y + 1.0),
                ],
                color.filled(),
            ));
        }
    }
    chart.draw_series(cells).map_err(|e| plot_error(path, e))?;
    root.present().map_err(|e| plot_error(path, e))
}

/// Reads the `chemical,pattern1,...` loadings file written by
/// [`crate::patterns::write_patterns`].
pub fn read_loadings(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let k = reader
        .headers()
        .map_err(|e| Error::csv(path, e))?
        .len()
        .saturating_sub(1);
    let mut names = Vec::new();
    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        names.push(record.get(0).unwrap_or_default().to_string());
        for c in 1..=k {
            let cell = record.get(c).unwrap_or_default();
            values.push(cell.trim().parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                row: row + 2,
                column: c + 1,
                message: format!("not a number: {cell:?}"),
            })?);
        }
    }
    Ok((
        names.clone(),
        DMatrix::from_row_slice(names.len(), k, &values),
    ))
}

/// Reads the `row,chemical,sparse,class` file written by
/// [`crate::patterns::write_event_classes`] back into a class matrix with
/// chemicals in order of first appearance.
pub fn read_event_classes(path: &Path) -> Result<(Vec<String>, DMatrix<SparseClass>)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut names: Vec<String> = Vec::new();
    let mut entries = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let bad = |column: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            row: line + 2,
            column,
            message,
        };
        let row: usize = record
            .get(0)
            .and_then(|v| v.parse().ok())
            .filter(|&r| r >= 1)
            .ok_or_else(|| bad(1, "row must be a positive integer".into()))?;
        let name = record.get(1).unwrap_or_default();
        let class = SparseClass::from_token(record.get(3).unwrap_or_default())
            .ok_or_else(|| bad(4, "class must be high, low or null".into()))?;
        let j = match names.iter().position(|n| n == name) {
            Some(j) => j,
            None => {
                names.push(name.to_string());
                names.len() - 1
            }
        };
        entries.push((row - 1, j, class));
    }
    let n = entries.iter().map(|e| e.0 + 1).max().unwrap_or(0);
    let mut classes = DMatrix::from_element(n, names.len(), SparseClass::Null);
    for (i, j, c) in entries {
        classes[(i, j)] = c;
    }
    Ok((names, classes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quantile_examples() {
        let v = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(quantile(&v, 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&v, 1.0).unwrap(), 4.0);
        assert_eq!(quantile(&v, 0.5).unwrap(), 2.5);
        assert_eq!(quantile(&v, 0.25).unwrap(), 1.75);
        assert_eq!(quantile(&[7.0], 0.3).unwrap(), 7.0);
        assert!(quantile(&[], 0.5).is_err());
        assert!(quantile(&v, 1.5).is_err());
    }

    /// Direct evaluation of Hyndman–Fan definition 7 from its order
    /// statistics formula `x_(⌊h⌋+1) + (h − ⌊h⌋)(x_(⌊h⌋+2) − x_(⌊h⌋+1))`
    /// with 1-based `h = (m − 1)p + 1`.
    fn oracle(values: &[f64], prob: f64) -> f64 {
        let mut x = values.to_vec();
        x.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let m = x.len() as f64;
        let h = (m - 1.0) * prob + 1.0;
        let j = h.floor();
        let g = h - j;
        let at = |k: f64| x[(k as usize).clamp(1, x.len()) - 1];
        at(j) + g * (at(j + 1.0) - at(j))
    }

    proptest! {
        #[test]
        fn quantile_matches_definition(v in prop::collection::vec(-100.0f64..100.0, 1..40), prob in 0.0f64..=1.0) {
            let ours = quantile(&v, prob).unwrap();
            prop_assert!((ours - oracle(&v, prob)).abs() <= 1e-12 * (1.0 + ours.abs()));
        }
    }

    #[test]
    fn labels_parse() {
        let k = ScenarioKey::parse("p48_sparse_q75").unwrap();
        assert_eq!((k.p, k.noise, k.lod_percent), (48, NoiseKind::Sparse, 75));
        assert!(ScenarioKey::parse("nhanes").is_none());
        assert!(ScenarioKey::parse("p16_loud_q25").is_none());
        assert!(ScenarioKey::parse("p16_low_q25_x").is_none());
    }

    fn records() -> Vec<MetricRecord> {
        let mut out = Vec::new();
        for (scenario, base) in [
            ("p16_low_q25", 0.1),
            ("p48_low_q25", 0.2),
            ("p16_high_q50", 0.5),
        ] {
            for method in ["pcp", "pca"] {
                for rep in 0..5 {
                    let v = base + rep as f64 * 0.01 + if method == "pca" { 0.3 } else { 0.0 };
                    out.push(MetricRecord::new(scenario, method, STRATUM_OVERALL, rep, v));
                }
            }
        }
        out
    }

    #[test]
    fn layout_pools_sizes_and_orders_rows() {
        let (header, rows) = layout_table(&records(), STRATUM_OVERALL).unwrap();
        assert_eq!(
            header,
            [
                "noise",
                "method",
                "lod25_p25",
                "lod25_p50",
                "lod25_p75",
                "lod50_p25",
                "lod50_p50",
                "lod50_p75"
            ]
        );
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0][..2], ["low".to_string(), "pca".to_string()]);
        assert_eq!(rows[1][..2], ["low".to_string(), "pcp".to_string()]);
        // pcp low q25 pools 0.10..0.14 and 0.20..0.24
        let pooled: Vec<f64> = (0..5)
            .flat_map(|r| [0.1 + r as f64 * 0.01, 0.2 + r as f64 * 0.01])
            .collect();
        assert_eq!(rows[1][3], format_f64(quantile(&pooled, 0.5).unwrap()));
        assert_eq!(rows[1][5], "");
        assert_eq!(rows[2][..2], ["high".to_string(), "pca".to_string()]);
    }

    #[test]
    fn metrics_round_trip_and_summary() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let recs = records();
        write_metrics(&recs, &path).unwrap();
        assert_eq!(read_metrics(&path).unwrap(), recs);
        let summary = summarize(&recs).unwrap();
        assert_eq!(summary.len(), 6);
        let ((s, m, _), q) = &summary[0];
        assert_eq!((s.as_str(), m.as_str()), ("p16_high_q50", "pca"));
        assert_eq!(q.count, 5);
        assert!((q.median - 0.82).abs() < 1e-12);
    }

    #[test]
    fn figures_render() {
        let dir = tempfile::tempdir().unwrap();
        let box_path = dir.path().join("box.svg");
        plot_boxplots(&records(), STRATUM_OVERALL, &box_path).unwrap();
        let svg = std::fs::read_to_string(&box_path).unwrap();
        assert!(svg.contains("<svg") && svg.contains("low noise, 25% &lt; LOD"));
        assert!(plot_boxplots(&records(), STRATUM_BELOW, &box_path).is_err());

        let l = DMatrix::from_fn(6, 3, |i, j| {
            ((i + 1) * (j + 2)) as f64 + if i == j { 3.0 } else { 0.0 }
        });
        let model = crate::patterns::extract_patterns(&l, 2).unwrap();
        let names = crate::data::default_column_names(3);
        let shares: Vec<f64> = model.explained_share.iter().copied().collect();
        plot_loadings(
            &model.right_vectors,
            &shares,
            &names,
            &dir.path().join("loadings.svg"),
        )
        .unwrap();

        let classes = DMatrix::from_row_slice(
            2,
            3,
            &[
                SparseClass::Null,
                SparseClass::Low,
                SparseClass::Null,
                SparseClass::High,
                SparseClass::High,
                SparseClass::Null,
            ],
        );
        assert_eq!(event_row_order(&classes), vec![1, 0]);
        plot_sparse_events(&classes, &names, &dir.path().join("events.svg")).unwrap();

        let s = DMatrix::from_element(2, 3, 0.5);
        let table = crate::patterns::SparseEventTable {
            classes: classes.clone(),
            residual_sd: vec![Some(1.0); 3],
            high_counts: vec![0, 2],
            low_counts: vec![1, 0],
            observed: DMatrix::from_element(2, 3, true),
        };
        let events = dir.path().join("events.csv");
        crate::patterns::write_event_classes(&table, &s, &names, &events).unwrap();
        assert_eq!(
            read_event_classes(&events).unwrap(),
            (names.clone(), classes)
        );
    }
}
