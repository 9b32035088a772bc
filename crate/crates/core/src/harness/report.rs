//! Tables, reports and their byte-stable text forms.
//!
//! Floats are written with 17 significant digits in scientific notation;
//! non-finite values are written as `nan`, `inf` and `-inf`. Lines end in
//! `\n` and every CSV starts with its header row.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Duration;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Uint(u64),
    Float(f64),
    Text(String),
}

impl Value {
    fn render(&self) -> String {
        match self {
            Value::Int(i) => i.to_string(),
            Value::Uint(u) => u.to_string(),
            Value::Float(x) => format_float(*x),
            Value::Text(s) => s.clone(),
        }
    }

    fn is_finite(&self) -> bool {
        !matches!(self, Value::Float(x) if !x.is_finite())
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Float(x)
    }
}

impl From<u64> for Value {
    fn from(x: u64) -> Self {
        Value::Uint(x)
    }
}

impl From<usize> for Value {
    fn from(x: usize) -> Self {
        Value::Uint(x as u64)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_string())
    }
}

pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.columns.len(), "row width mismatch in table {}", self.name);
        self.rows.push(row);
    }

    pub fn all_finite(&self) -> bool {
        self.rows.iter().flatten().all(Value::is_finite)
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Value::render).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Column of a table by name, as floats (non-float cells become NaN).
    pub fn column_f64(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| match &r[idx] {
                    Value::Float(x) => *x,
                    Value::Int(i) => *i as f64,
                    Value::Uint(u) => *u as f64,
                    Value::Text(_) => f64::NAN,
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub id: String,
    pub config_echo: String,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    pub timings: Vec<(String, Duration)>,
}

impl Report {
    pub fn new(id: &str, config_echo: String) -> Self {
        Self {
            id: id.to_string(),
            config_echo,
            ..Default::default()
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// All checks pass and no table holds a non-finite value.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed) && self.tables.iter().all(Table::all_finite)
    }

    /// Deterministic text form; wall-clock timings are left out.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "experiment: {}", self.id);
        let _ = writeln!(out, "status: {}", if self.passed() { "PASS" } else { "FAIL" });
        out.push_str("\n[config]\n");
        out.push_str(&self.config_echo);
        if !self.config_echo.ends_with('\n') {
            out.push('\n');
        }
        out.push_str("\n[checks]\n");
        for c in &self.checks {
            let _ = writeln!(out, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        let finite = self.tables.iter().all(Table::all_finite);
        let _ = writeln!(
            out,
            "{} tables free of nan/inf",
            if finite { "PASS" } else { "FAIL" }
        );
        for t in &self.tables {
            let _ = write!(out, "\n[table {}]\n{}", t.name, t.to_csv());
        }
        out
    }

    pub fn render_timings(&self) -> String {
        self.timings
            .iter()
            .map(|(name, d)| format!("{name},{:.6}\n", d.as_secs_f64()))
            .collect()
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn emit_csv(table: &Table, path: &Path) -> Result<()> {
    write_file(path, &table.to_csv())
}

pub fn emit_report(report: &Report, path: &Path) -> Result<()> {
    write_file(path, &report.render())
}

/// Writes every table as `<dir>/<table>.csv`, the report as
/// `<dir>/<id>_report.txt` and timings as `<dir>/<id>_timings.csv`.
pub fn emit_all(report: &Report, dir: &Path) -> Result<()> {
    for t in &report.tables {
        emit_csv(t, &dir.join(format!("{}.csv", t.name)))?;
    }
    emit_report(report, &dir.join(format!("{}_report.txt", report.id)))?;
    write_file(
        &dir.join(format!("{}_timings.csv", report.id)),
        &format!("phase,seconds\n{}", report.render_timings()),
    )
}
