//! CSV ingestion and the column manifests that pick model inputs and outputs
//! out of a wider table.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::evaluation::Dataset;

const AIR_MANIFEST: &str = include_str!("../../../manifests/air.manifest");
const BIKE_MANIFEST: &str = include_str!("../../../manifests/bike.manifest");

/// Keep only rows whose `column` equals `value`.
#[derive(Debug, Clone, PartialEq)]
pub struct RowFilter {
    pub column: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ColumnManifest {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub filter: Option<RowFilter>,
    /// Sentinel that marks a missing value in addition to empty/NA cells.
    pub missing_marker: Option<f64>,
    /// Keep only the first `rows` rows after filtering and dropping.
    pub rows: Option<usize>,
    pub folds: Option<usize>,
}

fn split_list(v: &str) -> Vec<String> {
    v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

impl ColumnManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut m = ColumnManifest::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::Config(format!("manifest line {}: {msg}", lineno + 1));
            let (k, v) = line.split_once('=').ok_or_else(|| bad("expected 'key = value'"))?;
            let v = v.trim();
            match k.trim() {
                "inputs" => m.inputs = split_list(v),
                "outputs" => m.outputs = split_list(v),
                "filter" => {
                    let (col, val) = v.split_once("==").ok_or_else(|| bad("filter must read 'column == value'"))?;
                    m.filter = Some(RowFilter {
                        column: col.trim().to_string(),
                        value: val.trim().parse().map_err(|_| bad("filter value is not a number"))?,
                    });
                }
                "missing" => m.missing_marker = Some(v.parse().map_err(|_| bad("missing marker is not a number"))?),
                "rows" => m.rows = Some(v.parse().map_err(|_| bad("rows is not an integer"))?),
                "folds" => m.folds = Some(v.parse().map_err(|_| bad("folds is not an integer"))?),
                other => return Err(bad(&format!("unknown key '{other}'"))),
            }
        }
        if m.inputs.is_empty() || m.outputs.is_empty() {
            return Err(Error::Config("manifest must list inputs and outputs".into()));
        }
        Ok(m)
    }

    /// A shipped manifest (`air`, `bike`) or a manifest file path.
    pub fn load(name_or_path: &str) -> Result<Self> {
        match name_or_path {
            "air" => Self::parse(AIR_MANIFEST),
            "bike" => Self::parse(BIKE_MANIFEST),
            path => Self::parse(&fs::read_to_string(path)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadOptions {
    /// Drop rows with a missing cell in any column instead of failing.
    pub drop_incomplete: bool,
}

/// Parses a numeric cell. Times of day written `H:MM[:SS]` or `H.MM.SS`
/// become fractional hours.
fn parse_cell(s: &str) -> Option<f64> {
    let t = s.trim();
    if let Ok(v) = t.parse::<f64>() {
        return Some(v);
    }
    let parts: Vec<&str> = if t.contains(':') {
        t.split(':').collect()
    } else if t.matches('.').count() == 2 {
        t.split('.').collect()
    } else {
        return None;
    };
    let nums: Option<Vec<f64>> = parts.iter().map(|p| p.parse::<u32>().ok().map(f64::from)).collect();
    match nums?.as_slice() {
        [h, m] if *m < 60.0 => Some(h + m / 60.0),
        [h, m, s] if *m < 60.0 && *s < 60.0 => Some(h + m / 60.0 + s / 3600.0),
        _ => None,
    }
}

fn is_missing(cell: &str, marker: Option<f64>) -> bool {
    let t = cell.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan") {
        return true;
    }
    marker.is_some_and(|mk| parse_cell(t) == Some(mk))
}

/// Reads a headed, comma-separated table and extracts the manifest's columns.
///
/// Order of operations: row filter, missing-value handling, row cap.
pub fn read_dataset(path: &Path, manifest: &ColumnManifest, opts: &LoadOptions) -> Result<Dataset> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    parse_dataset(&text, manifest, opts)
}

pub fn parse_dataset(text: &str, manifest: &ColumnManifest, opts: &LoadOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers.iter().all(String::is_empty) {
        return Err(Error::Data("CSV has no header row".into()));
    }
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();
    let locate = |names: &[String]| -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| {
                index.get(n.as_str()).copied().ok_or_else(|| {
                    Error::Data(format!("column '{n}' not found; header has: {}", headers.join(", ")))
                })
            })
            .collect()
    };
    let in_idx = locate(&manifest.inputs)?;
    let out_idx = locate(&manifest.outputs)?;
    let filter_idx = manifest.filter.as_ref().map(|f| locate(std::slice::from_ref(&f.column))).transpose()?;
    let used: Vec<usize> = in_idx.iter().chain(&out_idx).chain(filter_idx.iter().flatten()).copied().collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec?;
        // header is line 1
        let line = r + 2;
        let cell = |c: usize| rec.get(c).unwrap_or("");
        if let (Some(f), Some(fi)) = (&manifest.filter, &filter_idx) {
            match parse_cell(cell(fi[0])) {
                Some(v) if v == f.value => {}
                Some(_) => continue,
                None if opts.drop_incomplete => continue,
                None => {
                    return Err(Error::Data(format!(
                        "line {line}, column '{}': cannot read '{}' as a number",
                        f.column,
                        cell(fi[0])
                    )))
                }
            }
        }
        if opts.drop_incomplete && (0..headers.len()).any(|c| is_missing(cell(c), manifest.missing_marker)) {
            continue;
        }
        let mut values = Vec::with_capacity(used.len());
        for &c in in_idx.iter().chain(&out_idx) {
            let raw = cell(c);
            if is_missing(raw, manifest.missing_marker) {
                return Err(Error::Data(format!(
                    "line {line}, column '{}': missing value (use the drop-incomplete option to skip such rows)",
                    headers[c]
                )));
            }
            let v = parse_cell(raw).filter(|v| v.is_finite()).ok_or_else(|| {
                Error::Data(format!("line {line}, column '{}': cannot read '{raw}' as a number", headers[c]))
            })?;
            values.push(v);
        }
        rows.push(values);
        if manifest.rows.is_some_and(|cap| rows.len() == cap) {
            break;
        }
    }
    if let Some(cap) = manifest.rows {
        if rows.len() < cap {
            return Err(Error::Data(format!("manifest asks for {cap} rows but only {} qualify", rows.len())));
        }
    }
    if rows.is_empty() {
        return Err(Error::Data("no data rows".into()));
    }
    let p = in_idx.len();
    let d = out_idx.len();
    let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    let y = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][p + j]);
    Dataset::new(x, y, manifest.inputs.clone(), manifest.outputs.clone())
}

/// Writes a headed CSV of the given columns.
pub fn write_matrix_csv(path: &Path, headers: &[String], m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(headers)?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| format!("{v}")))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> ColumnManifest {
        ColumnManifest::parse("inputs = a, b\noutputs = y\n").unwrap()
    }

    #[test]
    fn shipped_manifests_parse() {
        let air = ColumnManifest::load("air").unwrap();
        assert_eq!((air.inputs.len(), air.outputs.len(), air.rows, air.folds), (9, 5, Some(864), Some(9)));
        assert_eq!(air.missing_marker, Some(-200.0));
        let bike = ColumnManifest::load("bike").unwrap();
        assert_eq!((bike.inputs.len(), bike.outputs.len(), bike.rows, bike.folds), (8, 2, Some(168), Some(8)));
        assert_eq!(bike.filter, Some(RowFilter { column: "season".into(), value: 3.0 }));
    }

    #[test]
    fn reads_selected_columns_in_manifest_order() {
        let ds = parse_dataset("b,y,a\n1,2,3\n4,5,6\n", &manifest(), &LoadOptions::default()).unwrap();
        assert_eq!(ds.x, DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 6.0, 4.0]));
        assert_eq!(ds.y, DMatrix::from_row_slice(2, 1, &[2.0, 5.0]));
    }

    #[test]
    fn missing_value_names_line_and_column() {
        let err = parse_dataset("a,b,y\n1,2,3\n4,,6\n", &manifest(), &LoadOptions::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3") && msg.contains("'b'"), "{msg}");
    }

    #[test]
    fn drop_incomplete_skips_rows_with_any_gap() {
        let opts = LoadOptions { drop_incomplete: true };
        let ds = parse_dataset("a,b,y,z\n1,2,3,\n4,5,6,7\n", &manifest(), &opts).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.y[(0, 0)], 6.0);
    }

    #[test]
    fn sentinel_filter_and_cap() {
        let m = ColumnManifest::parse("inputs = a\noutputs = y\nfilter = s == 3\nmissing = -200\nrows = 2\n").unwrap();
        let csv = "s,a,y\n3,1,1\n2,9,9\n3,-200,1\n3,2,2\n3,3,3\n";
        let ds = parse_dataset(csv, &m, &LoadOptions { drop_incomplete: true }).unwrap();
        assert_eq!(ds.x.as_slice(), &[1.0, 2.0]);
        assert!(parse_dataset(csv, &m, &LoadOptions::default()).is_err());
    }

    #[test]
    fn unknown_column_lists_header() {
        let err = parse_dataset("a,q\n1,2\n", &manifest(), &LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("'b' not found"));
    }

    #[test]
    fn times_of_day_read_as_hours() {
        assert_eq!(parse_cell("18.00.00"), Some(18.0));
        assert_eq!(parse_cell("6:30"), Some(6.5));
        assert_eq!(parse_cell("1.5"), Some(1.5));
        assert_eq!(parse_cell("x"), None);
    }

    #[test]
    fn manifest_rejects_unknown_keys() {
        assert!(ColumnManifest::parse("inputs = a\noutputs = b\ncolour = red\n").is_err());
    }
}
