//! Convergence reports as CSV, JSON and plot data.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::harness::{fitted_rates, ZNorm};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "N,M,errY,ciYlo,ciYhi,errZ,ciZlo,ciZhi,runtime";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub n: usize,
    pub m: usize,
    pub err_y: f64,
    pub ci_y_lo: f64,
    pub ci_y_hi: f64,
    pub err_z: f64,
    pub ci_z_lo: f64,
    pub ci_z_hi: f64,
    pub runtime: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub problem: String,
    pub scheme: String,
    pub seed: u64,
    pub batches: usize,
    pub z_norm: ZNorm,
    pub rows: Vec<ReportRow>,
    /// Least-squares rates; absent with fewer than two rows.
    pub cr_y: Option<f64>,
    pub cr_z: Option<f64>,
    /// Two-point rates between adjacent rows.
    pub pairwise_y: Vec<f64>,
    pub pairwise_z: Vec<f64>,
}

impl ConvergenceReport {
    pub fn new(problem: String, scheme: String, seed: u64, batches: usize, z_norm: ZNorm, rows: Vec<ReportRow>) -> Self {
        let (cr_y, cr_z, pairwise_y, pairwise_z) = fitted_rates(&rows);
        Self {
            problem,
            scheme,
            seed,
            batches,
            z_norm,
            rows,
            cr_y,
            cr_z,
            pairwise_y,
            pairwise_z,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{CSV_HEADER}").unwrap();
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.n, r.m, r.err_y, r.ci_y_lo, r.ci_y_hi, r.err_z, r.ci_z_lo, r.ci_z_hi, r.runtime
            )
            .unwrap();
        }
        if let (Some(y), Some(z)) = (self.cr_y, self.cr_z) {
            writeln!(s, "# CR_Y,{y}").unwrap();
            writeln!(s, "# CR_Z,{z}").unwrap();
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Whitespace-separated `log₂N log₂errY log₂errZ` lines.
    pub fn plot_data(&self) -> String {
        let mut s = format!("# {} / {}\n# log2N log2errY log2errZ\n", self.problem, self.scheme);
        for r in &self.rows {
            writeln!(s, "{} {} {}", (r.n as f64).log2(), r.err_y.log2(), r.err_z.log2()).unwrap();
        }
        s
    }
}

/// Rows and the CR footer of a CSV report.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedCsv {
    pub rows: Vec<ReportRow>,
    pub cr_y: Option<f64>,
    pub cr_z: Option<f64>,
}

pub fn parse_csv(text: &str) -> Result<ParsedCsv> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Parse("report CSV header missing".into()));
    }
    let num = |s: &str| f64::from_str(s.trim()).map_err(|e| Error::Parse(format!("bad number `{s}`: {e}")));
    let int = |s: &str| usize::from_str(s.trim()).map_err(|e| Error::Parse(format!("bad integer `{s}`: {e}")));
    let mut out = ParsedCsv {
        rows: Vec::new(),
        cr_y: None,
        cr_z: None,
    };
    for line in lines.filter(|l| !l.trim().is_empty()) {
        if let Some(footer) = line.strip_prefix("# ") {
            match footer.split_once(',') {
                Some(("CR_Y", v)) => out.cr_y = Some(num(v)?),
                Some(("CR_Z", v)) => out.cr_z = Some(num(v)?),
                _ => {}
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(Error::Parse(format!("expected 9 fields, got {}: `{line}`", f.len())));
        }
        out.rows.push(ReportRow {
            n: int(f[0])?,
            m: int(f[1])?,
            err_y: num(f[2])?,
            ci_y_lo: num(f[3])?,
            ci_y_hi: num(f[4])?,
            err_z: num(f[5])?,
            ci_z_lo: num(f[6])?,
            ci_z_hi: num(f[7])?,
            runtime: num(f[8])?,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Plot,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "plot" | "dat" => Ok(ReportFormat::Plot),
            _ => Err(Error::Invalid(format!("unknown report format `{s}` (csv, json, plot)"))),
        }
    }
}

pub fn render_report(report: &ConvergenceReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Csv => Ok(report.to_csv()),
        ReportFormat::Json => report.to_json().map(|s| s + "\n"),
        ReportFormat::Plot => Ok(report.plot_data()),
    }
}

pub fn emit_report(report: &ConvergenceReport, format: ReportFormat, path: &Path) -> Result<()> {
    std::fs::write(path, render_report(report, format)?)?;
    Ok(())
}
