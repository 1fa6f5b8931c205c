//! CSV files with `#` metadata headers, and gnuplot scripts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use crate::config::OUTPUT_MAGIC;

/// Floats are written with seventeen significant digits.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `content` next to `path` and renames it into place.
pub fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, content).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("moving {} into place", path.display()))?;
    Ok(())
}

/// A table under a header block.
pub struct Table {
    header: String,
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: String, columns: &[&str]) -> Self {
        Self {
            header,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = self.header.clone();
        let _ = writeln!(out, "{}", self.columns.join(","));
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.join(","));
        }
        out
    }
}

/// Free text safe to place in a CSV cell.
pub fn cell(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

/// One row of a sweep file.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub t_f: f64,
    pub density: f64,
    pub modes: usize,
    pub steps: usize,
    pub fallbacks: usize,
    pub terminal_bound: f64,
    pub status: String,
}

impl SweepRow {
    pub const COLUMNS: [&'static str; 7] = ["t_f", "E", "modes", "steps", "fallbacks", "terminal_bound", "status"];

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn failed(t_f: f64, message: &str) -> Self {
        Self {
            t_f,
            density: f64::NAN,
            modes: 0,
            steps: 0,
            fallbacks: 0,
            terminal_bound: f64::NAN,
            status: format!("failed: {}", cell(message)),
        }
    }

    pub fn cells(&self) -> Vec<String> {
        vec![
            float(self.t_f),
            float(self.density),
            self.modes.to_string(),
            self.steps.to_string(),
            self.fallbacks.to_string(),
            float(self.terminal_bound),
            self.status.clone(),
        ]
    }
}

/// Contents of a sweep file: its fingerprint and rows.
#[derive(Debug)]
pub struct SweepFile {
    pub fingerprint: String,
    pub rows: Vec<SweepRow>,
}

pub fn read_sweep(path: &Path) -> Result<SweepFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_sweep(&path.display().to_string(), &text)
}

fn parse_sweep(source: &str, text: &str) -> Result<SweepFile> {
    if !text.starts_with(&format!("{OUTPUT_MAGIC} sweep")) {
        bail!("{source}: not a kzopen sweep file");
    }
    let mut fingerprint = None;
    let mut columns_seen = false;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let at = || format!("{source}:{}", i + 1);
        if let Some(meta) = line.strip_prefix('#') {
            if let Some(fp) = meta.trim().strip_prefix("fingerprint = ") {
                fingerprint = Some(fp.trim().to_string());
            }
            continue;
        }
        if !columns_seen {
            if line != SweepRow::COLUMNS.join(",") {
                bail!("{}: unexpected columns `{line}`", at());
            }
            columns_seen = true;
            continue;
        }
        let f: Vec<&str> = line.splitn(7, ',').collect();
        if f.len() != 7 {
            bail!("{}: expected 7 fields", at());
        }
        let number = |s: &str| s.parse::<f64>().map_err(|e| anyhow!("{}: `{s}`: {e}", at()));
        let count = |s: &str| s.parse::<usize>().map_err(|e| anyhow!("{}: `{s}`: {e}", at()));
        rows.push(SweepRow {
            t_f: number(f[0])?,
            density: number(f[1])?,
            modes: count(f[2])?,
            steps: count(f[3])?,
            fallbacks: count(f[4])?,
            terminal_bound: number(f[5])?,
            status: f[6].to_string(),
        });
    }
    let fingerprint = fingerprint.ok_or_else(|| anyhow!("{source}: no fingerprint line"))?;
    Ok(SweepFile { fingerprint, rows })
}

/// Single-quoted gnuplot string.
fn quoted(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

/// Script drawing columns of one or more CSV files, each entry being
/// `(file, x column, y column, title)`.
pub fn gnuplot(title: &str, xlabel: &str, ylabel: &str, logscale: &str, series: &[(String, usize, usize, String)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set datafile commentschars '#'");
    let _ = writeln!(s, "set key autotitle columnhead");
    let _ = writeln!(s, "set title {}", quoted(title));
    let _ = writeln!(s, "set xlabel {}", quoted(xlabel));
    let _ = writeln!(s, "set ylabel {}", quoted(ylabel));
    if !logscale.is_empty() {
        let _ = writeln!(s, "set logscale {logscale}");
    }
    let parts: Vec<String> = series
        .iter()
        .map(|(file, x, y, t)| format!("{} using {x}:{y} with linespoints title {}", quoted(file), quoted(t)))
        .collect();
    let _ = writeln!(s, "plot {}", parts.join(", \\\n     "));
    s
}
