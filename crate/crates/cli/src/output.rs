//! CSV tables with a commented header block, and the run summary.

use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Self { columns, ..Default::default() }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.header.push((key.to_string(), value.to_string()));
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.header {
            s.push_str(&format!("# {k}: {v}\n"));
        }
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.render())
    }
}

/// `out.csv` -> `out.<suffix>`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "ssr_out".into());
    path.with_file_name(format!("{stem}.{suffix}"))
}

#[derive(Debug, Clone, Serialize)]
pub struct PointSummary {
    pub index: usize,
    /// Forcing frequency, or the two base frequencies of a qp grid point.
    pub omega: Vec<f64>,
    pub converged: bool,
    pub method: String,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    pub total_s: f64,
    /// Per-point wall clock where points are solved independently.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub per_point_s: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub command: String,
    pub status: String,
    pub result_file: String,
    pub warnings: Vec<String>,
    pub timings: Timings,
    pub points: Vec<PointSummary>,
    pub config: RunConfig,
}

impl Summary {
    pub fn write(&self, path: &Path) -> io::Result<()> {
        let text = toml::to_string_pretty(self).map_err(io::Error::other)?;
        std::fs::write(path, text)
    }
}
