//! CSV and JSON writers. CSV numbers carry 9 significant digits; JSON keys
//! come out sorted, and every document carries the schema tag.

use std::io::Write;
use std::path::Path;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::netlist::format_sig9;

pub const SCHEMA: &str = "stabilsim/1";

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, EmitError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| match c {
                Cell::Num(v) => format_sig9(*v),
                Cell::Text(s) => s.clone(),
                Cell::Empty => String::new(),
            }))?;
        }
        w.flush().map_err(|source| EmitError::Io { path: "<buffer>".into(), source })?;
        w.into_inner().map_err(|e| e.into_error()).map_err(|source| EmitError::Io { path: "<buffer>".into(), source })
    }
}

/// Wraps `fields` in a top-level object tagged with the schema and `kind`.
pub fn json_document(kind: &str, fields: Map<String, Value>) -> Vec<u8> {
    let mut doc = fields;
    doc.insert("schema".into(), Value::from(SCHEMA));
    doc.insert("kind".into(), Value::from(kind));
    let mut out = serde_json::to_vec_pretty(&Value::Object(doc)).expect("values serialize");
    out.push(b'\n');
    out
}

/// Writes to `path`, or standard output when `None`.
pub fn write_sink(bytes: &[u8], path: Option<&Path>, stdout: &mut dyn Write) -> Result<(), EmitError> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|source| EmitError::Io { path: p.display().to_string(), source }),
        None => stdout
            .write_all(bytes)
            .and_then(|_| stdout.flush())
            .map_err(|source| EmitError::Io { path: "<stdout>".into(), source }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rows_and_digits() {
        let mut t = Table::new(["time", "v(out)"]);
        for i in 0..3 {
            t.push(vec![Cell::Num(i as f64 * 1e-3), Cell::Num(1.0 / 3.0)]);
        }
        let text = String::from_utf8(t.to_csv().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[2], "0.001,0.333333333");
        assert!(!text.contains('\r'));
    }

    #[test]
    fn json_has_schema_and_sorted_keys() {
        let mut m = Map::new();
        m.insert("zeta".into(), Value::from(1));
        m.insert("alpha".into(), Value::from(2));
        let text = String::from_utf8(json_document("test", m)).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["schema"], SCHEMA);
        assert!(text.find("alpha").unwrap() < text.find("zeta").unwrap());
    }
}
