//! Report envelope: a header (tool version, resolved config, seeds, an
//! isolated timestamp), named tables, structured details, and summary lines.
//! Renders as JSON, CSV sidecars, or aligned text.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
        w.write_record(&self.columns).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(csv_cell)).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_text(&self) -> String {
        let cells: Vec<Vec<String>> = self.rows.iter().map(|r| r.iter().map(text_cell).collect()).collect();
        let mut width: Vec<usize> = self.columns.iter().map(|c| c.len()).collect();
        for r in &cells {
            for (w, c) in width.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |r: &[String]| {
            r.iter()
                .zip(&width)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut out = line(&self.columns);
        out.push('\n');
        out.push_str(&line(&width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>()));
        out.push('\n');
        for r in &cells {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn text_cell(v: &Value) -> String {
    match v {
        Value::Null => "-".into(),
        Value::String(s) => s.clone(),
        Value::Number(n) if n.is_f64() => format!("{:.4}", n.as_f64().unwrap_or(f64::NAN)),
        other => other.to_string(),
    }
}

/// Number cell; non-finite values become null.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

pub fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Header {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: Value,
    pub seeds: Value,
    /// Unix seconds; the only field allowed to differ between identical runs.
    pub generated_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub header: Header,
    pub tables: BTreeMap<String, Table>,
    pub details: Value,
    /// PASS / WARN / NOTE lines.
    pub summary: Vec<String>,
    pub invariant_failures: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Text,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "text" => Ok(Format::Text),
            _ => Err(Error::InvalidArgument(format!("unknown format `{s}`"))),
        }
    }
}

impl Report {
    pub fn new(command: &str, config: Value, seeds: Value) -> Self {
        Self {
            header: Header {
                tool: "gatecheck".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                config,
                seeds,
                generated_at: None,
            },
            tables: BTreeMap::new(),
            details: Value::Null,
            summary: Vec::new(),
            invariant_failures: Vec::new(),
        }
    }

    pub fn table(&mut self, name: &str, t: Table) {
        self.tables.insert(name.to_string(), t);
    }

    pub fn passed_invariants(&self) -> bool {
        self.invariant_failures.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report always serializes")
    }

    /// JSON with the timestamp removed; identical runs give identical bytes.
    pub fn deterministic_json(&self) -> String {
        let mut r = self.clone();
        r.header.generated_at = None;
        r.to_json()
    }

    /// All tables as CSV, one block per table with a `# name` line.
    pub fn to_csv(&self) -> Result<String> {
        let mut out = String::new();
        for (name, t) in &self.tables {
            out.push_str(&format!("# {name}\n"));
            out.push_str(&t.to_csv()?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("gatecheck {}\n\n", self.header.command);
        for (name, t) in &self.tables {
            out.push_str(&format!("== {name} ==\n"));
            out.push_str(&t.to_text());
            out.push('\n');
        }
        for f in &self.invariant_failures {
            out.push_str(&format!("INVARIANT FAILED: {f}\n"));
        }
        for s in &self.summary {
            out.push_str(s);
            out.push('\n');
        }
        out
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Json => Ok(self.to_json()),
            Format::Csv => self.to_csv(),
            Format::Text => Ok(self.to_text()),
        }
    }

    /// Writes `<command>.json`, `<command>.txt` and one `<command>_<table>.csv`
    /// per table into `dir`. Returns the written paths.
    pub fn write_bundle(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let cmd = &self.header.command;
        let mut files = vec![
            (dir.join(format!("{cmd}.json")), self.to_json()),
            (dir.join(format!("{cmd}.txt")), self.to_text()),
        ];
        for (name, t) in &self.tables {
            files.push((dir.join(format!("{cmd}_{name}.csv")), t.to_csv()?));
        }
        let mut written = Vec::new();
        for (p, body) in files {
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
            written.push(p);
        }
        Ok(written)
    }
}
