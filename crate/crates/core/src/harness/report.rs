//! Scaling reports: JSON summary plus a CSV of raw measurements.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::stats::{Interval, LinearFit};

pub const SCHEMA_VERSION: u32 = 1;

/// One measured cell. `epsilon` holds the perturbation size or initial shift;
/// `method` names the quantity and how it was computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub t: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub method: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSummary {
    pub label: String,
    pub fit: LinearFit,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope_interval: Option<Interval>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseFloor {
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriterionCheck {
    pub name: String,
    pub measured: f64,
    pub threshold: String,
    pub pass: bool,
}

impl CriterionCheck {
    pub fn new(name: impl Into<String>, measured: f64, threshold: impl Into<String>, pass: bool) -> Self {
        Self {
            name: name.into(),
            measured,
            threshold: threshold.into(),
            pass,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingReport {
    pub schema_version: u32,
    pub experiment: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub module_versions: BTreeMap<String, String>,
    pub config_hash: String,
    pub config: serde_json::Value,
    /// Parallel reductions are index-ordered, so reruns are bit-identical.
    pub reduction_mode: String,
    pub rows: Vec<ReportRow>,
    pub fits: Vec<FitSummary>,
    pub noise_floor: Vec<NoiseFloor>,
    pub checks: Vec<CriterionCheck>,
    pub warnings: Vec<String>,
    pub verdict: bool,
}

pub fn module_versions() -> BTreeMap<String, String> {
    let v = env!("CARGO_PKG_VERSION").to_string();
    ["psi", "measures", "distances", "coefficients", "sde", "mkv", "harness"]
        .iter()
        .map(|m| (format!("{}::{m}", env!("CARGO_PKG_NAME")), v.clone()))
        .collect()
}

impl ScalingReport {
    pub fn new(experiment: &str, name: Option<String>, config: serde_json::Value, config_hash: String) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.to_string(),
            name,
            module_versions: module_versions(),
            config_hash,
            config,
            reduction_mode: "ordered".into(),
            rows: Vec::new(),
            fits: Vec::new(),
            noise_floor: Vec::new(),
            checks: Vec::new(),
            warnings: Vec::new(),
            verdict: false,
        }
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    /// Verdict is the conjunction of the recorded checks.
    pub fn finish(&mut self) {
        self.verdict = !self.checks.is_empty() && self.checks.iter().all(|c| c.pass);
    }

    pub fn rows_with_method<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a ReportRow> + 'a {
        self.rows.iter().filter(move |r| r.method == method)
    }

    /// Writes `<stem>.json` and `<stem>.csv` into `dir`; returns both paths.
    pub fn write(&self, dir: impl AsRef<Path>, stem: &str) -> Result<(PathBuf, PathBuf)> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&json, serde_json::to_string_pretty(self)?)?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let mut w = csv::Writer::from_path(&csv_path)?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok((json, csv_path))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn read_rows_csv(path: impl AsRef<Path>) -> Result<Vec<ReportRow>> {
        let mut r = csv::Reader::from_path(path)?;
        Ok(r.deserialize().collect::<std::result::Result<Vec<ReportRow>, _>>()?)
    }

    /// Plain-text table of the checks.
    pub fn summary_table(&self) -> String {
        let mut out = format!("experiment {} (config {})\n", self.experiment, &self.config_hash[..12.min(self.config_hash.len())]);
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
        out.push_str(&format!("{:<width$}  {:>14}  {:<28}  result\n", "check", "measured", "threshold"));
        for c in &self.checks {
            out.push_str(&format!(
                "{:<width$}  {:>14.6e}  {:<28}  {}\n",
                c.name,
                c.measured,
                c.threshold,
                if c.pass { "pass" } else { "FAIL" }
            ));
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out.push_str(&format!("verdict: {}\n", if self.verdict { "pass" } else { "FAIL" }));
        out
    }
}
