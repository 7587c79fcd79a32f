//! JSON, CSV and gnuplot `.dat` output for harness reports.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::error::Result;

pub const SCHEMA_VERSION: u32 = 1;

/// A numeric table: one row per ladder rung or time sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Option<f64>>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Missing cells are left empty.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.map(fmt).unwrap_or_default()))?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is utf-8"))
    }

    /// Whitespace separated with a `#` header; missing cells become `NaN`.
    pub fn to_dat(&self) -> String {
        let mut s = format!("# {}\n", self.columns.join(" "));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.map(fmt).unwrap_or_else(|| "NaN".into())).collect();
            s.push_str(&cells.join(" "));
            s.push('\n');
        }
        s
    }
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

pub trait Report: Serialize {
    const KIND: &'static str;
    fn passed(&self) -> bool;
    fn table(&self) -> Table;

    fn to_json(&self) -> Result<serde_json::Value> {
        Ok(json!({
            "schema_version": SCHEMA_VERSION,
            "kind": Self::KIND,
            "pass": self.passed(),
            "report": serde_json::to_value(self)?,
        }))
    }
}

/// Writes `<stem>.json`, `<stem>.csv` and `<stem>.dat` into `dir`.
pub fn write_report<R: Report>(dir: &Path, stem: &str, report: &R) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let table = report.table();
    let json_path = dir.join(format!("{stem}.json"));
    fs::write(&json_path, serde_json::to_string_pretty(&report.to_json()?)?)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    fs::write(&csv_path, table.to_csv()?)?;
    let dat_path = dir.join(format!("{stem}.dat"));
    fs::write(&dat_path, table.to_dat())?;
    Ok(vec![json_path, csv_path, dat_path])
}
