//! Tabular reports written as CSV or JSON.
//!
//! Both formats carry `schema_version`. Non-finite numbers are written as the
//! strings `inf`, `-inf` and `nan`, and a ratio that is undefined because its
//! reference is infinite is written as a single backslash. Finite numbers use
//! Rust's shortest round-trip formatting, so reading them back is exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::config::Format;

pub const SCHEMA_VERSION: u32 = 1;

/// Written in place of a relative reduction whose baseline is infinite.
pub const UNDEFINED_RATIO: &str = "\\";

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(u64),
    Num(f64),
    Bool(bool),
    Empty,
    Undefined,
}

impl Cell {
    fn to_text(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) => format_number(*v),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
            Cell::Undefined => UNDEFINED_RATIO.to_string(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Int(v) => json!(v),
            Cell::Num(v) if v.is_finite() => json!(v),
            Cell::Num(v) => Value::String(format_number(*v)),
            Cell::Bool(b) => Value::Bool(*b),
            Cell::Empty => Value::Null,
            Cell::Undefined => Value::String(UNDEFINED_RATIO.to_string()),
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:?}")
    }
}

/// Inverse of [`format_number`].
pub fn parse_number(s: &str) -> Option<f64> {
    match s {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        "nan" => Some(f64::NAN),
        _ => s.parse().ok(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width does not match table `{}`", self.name);
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = std::iter::once("schema_version").chain(self.columns.iter().map(String::as_str));
        w.write_record(header).expect("writing to memory");
        let version = SCHEMA_VERSION.to_string();
        for row in &self.rows {
            let cells = std::iter::once(version.clone()).chain(row.iter().map(Cell::to_text));
            w.write_record(cells).expect("writing to memory");
        }
        w.into_inner().expect("writing to memory")
    }

    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut obj = Map::new();
                for (c, v) in self.columns.iter().zip(row) {
                    obj.insert(c.clone(), v.to_json());
                }
                Value::Object(obj)
            })
            .collect();
        json!({ "schema_version": SCHEMA_VERSION, "table": self.name, "columns": self.columns, "rows": rows })
    }
}

/// Writes `table` to `path` in `format`.
pub fn write_table(table: &Table, path: &Path, format: Format) -> std::io::Result<()> {
    let bytes = match format {
        Format::Csv => table.to_csv(),
        Format::Json => {
            let mut b = serde_json::to_vec_pretty(&table.to_json()).map_err(std::io::Error::other)?;
            b.push(b'\n');
            b
        }
    };
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)
}

/// Writes every table of a report to `dir/<table name>.<ext>` and returns
/// the paths in order.
pub fn write_report(tables: &[Table], dir: &Path, format: Format) -> std::io::Result<Vec<std::path::PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(tables.len());
    for t in tables {
        let path = dir.join(format!("{}.{}", t.name, format.extension()));
        write_table(t, &path, format)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Column-aligned text rendering for stdout.
pub fn render_text(table: &Table) -> String {
    let cells: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            r.iter()
                .map(|c| match c {
                    Cell::Num(v) if *v != 0.0 && v.abs() < 1e-3 => format!("{v:.2e}"),
                    Cell::Num(v) if v.is_finite() => format!("{v:.4}"),
                    other => other.to_text(),
                })
                .collect()
        })
        .collect();
    let mut widths: Vec<usize> = table.columns.iter().map(String::len).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let line = |items: &mut dyn Iterator<Item = &str>| -> String {
        items.zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect::<Vec<_>>().join("  ").trim_end().to_string()
    };
    let mut out = line(&mut table.columns.iter().map(String::as_str));
    out.push('\n');
    for row in &cells {
        out.push_str(&line(&mut row.iter().map(String::as_str)));
        out.push('\n');
    }
    out
}
