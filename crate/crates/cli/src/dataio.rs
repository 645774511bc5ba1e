//! CSV ingestion for benchmark datasets.
//!
//! One canonical layout: a header row with `y`, `d`, covariates `z1..zp` and
//! optionally the true conditional means `mu0..mu{n-1}`. Column order is free
//! and extra columns are ignored. Every cell must parse; there are no
//! defaults for missing values.

use std::io::Read;
use std::path::Path;

use orthate::estimators::Dataset;
use orthate::nuisance::FeatureMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    /// `line` counts the header as line 1.
    #[error("line {line}, column `{column}`: {message}")]
    Parse { line: u64, column: String, message: String },
    #[error("schema: {0}")]
    Schema(String),
}

/// Column names of the canonical layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMap {
    pub y: String,
    pub d: String,
    /// Covariates are `{z_prefix}1 ..= {z_prefix}p`.
    pub z_prefix: String,
    /// True means are `{mu_prefix}0 .. {mu_prefix}{n-1}`.
    pub mu_prefix: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self { y: "y".into(), d: "d".into(), z_prefix: "z".into(), mu_prefix: "mu".into() }
    }
}

/// Columns named `{prefix}{i}`, returned as `(i, position)` sorted by `i`.
fn numbered(headers: &csv::StringRecord, prefix: &str) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = headers
        .iter()
        .enumerate()
        .filter_map(|(pos, h)| {
            let rest = h.strip_prefix(prefix)?;
            if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
            Some((rest.parse().ok()?, pos))
        })
        .collect();
    out.sort_unstable();
    out
}

fn expect_contiguous(cols: &[(usize, usize)], first: usize, prefix: &str) -> Result<(), DataError> {
    for (expected, &(i, _)) in (first..).zip(cols) {
        if i != expected {
            return Err(DataError::Schema(format!("expected column {prefix}{expected}, found {prefix}{i}")));
        }
    }
    Ok(())
}

fn position(headers: &csv::StringRecord, name: &str) -> Result<usize, DataError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| DataError::Schema(format!("missing column `{name}`")))
}

fn parse_real(cell: &str, line: u64, column: &str) -> Result<f64, DataError> {
    let err = |message: String| DataError::Parse { line, column: column.to_string(), message };
    let v: f64 = cell.trim().parse().map_err(|_| err(format!("`{cell}` is not a number")))?;
    if !v.is_finite() {
        return Err(err(format!("`{cell}` is not finite")));
    }
    Ok(v)
}

fn parse_label(cell: &str, line: u64, column: &str) -> Result<usize, DataError> {
    cell.trim().parse().map_err(|_| DataError::Parse {
        line,
        column: column.to_string(),
        message: format!("`{cell}` is not a non-negative integer label"),
    })
}

/// Reads a dataset from CSV text.
///
/// With `n_treatments = None` the count is `max(d) + 1`, or the number of
/// `mu` columns when those are present.
pub fn read_csv_dataset<R: Read>(reader: R, columns: &ColumnMap, n_treatments: Option<usize>) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::Headers).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| DataError::Parse { line: 1, column: String::new(), message: e.to_string() })?
        .clone();
    let y_pos = position(&headers, &columns.y)?;
    let d_pos = position(&headers, &columns.d)?;
    let z_cols = numbered(&headers, &columns.z_prefix);
    let mu_cols = numbered(&headers, &columns.mu_prefix);
    if z_cols.is_empty() {
        return Err(DataError::Schema(format!("no covariate columns `{}1`, `{}2`, ...", columns.z_prefix, columns.z_prefix)));
    }
    expect_contiguous(&z_cols, 1, &columns.z_prefix)?;
    expect_contiguous(&mu_cols, 0, &columns.mu_prefix)?;

    let p = z_cols.len();
    let mut y = Vec::new();
    let mut d = Vec::new();
    let mut z = Vec::new();
    let mut mu: Vec<Vec<f64>> = vec![Vec::new(); mu_cols.len()];
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            DataError::Parse { line, column: String::new(), message: e.to_string() }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        y.push(parse_real(&record[y_pos], line, &columns.y)?);
        d.push(parse_label(&record[d_pos], line, &columns.d)?);
        for &(_, pos) in &z_cols {
            z.push(parse_real(&record[pos], line, &headers[pos])?);
        }
        for (slot, &(_, pos)) in mu_cols.iter().enumerate() {
            mu[slot].push(parse_real(&record[pos], line, &headers[pos])?);
        }
    }
    if y.is_empty() {
        return Err(DataError::Schema("no data rows".into()));
    }

    let observed = d.iter().copied().max().unwrap_or(0) + 1;
    let n = match (n_treatments, mu_cols.len()) {
        (Some(n), 0) => n,
        (Some(n), m) if m == n => n,
        (Some(n), m) => return Err(DataError::Schema(format!("{m} `{}` columns for {n} treatments", columns.mu_prefix))),
        (None, 0) => observed.max(2),
        (None, m) => m,
    };
    if let Some((row, &label)) = d.iter().enumerate().find(|(_, &l)| l >= n) {
        return Err(DataError::Schema(format!(
            "data row {} has treatment label {label}, outside 0..{n}",
            row + 1
        )));
    }
    let q = y.len();
    let z = FeatureMatrix::new(q, p, z).map_err(|e| DataError::Schema(e.to_string()))?;
    let truth = if mu.is_empty() { None } else { Some(mu) };
    Dataset::with_truth(y, d, z, n, truth).map_err(|e| DataError::Schema(e.to_string()))
}

pub fn load_csv_dataset(path: &Path, columns: &ColumnMap, n_treatments: Option<usize>) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
    read_csv_dataset(std::io::BufReader::new(file), columns, n_treatments)
}
