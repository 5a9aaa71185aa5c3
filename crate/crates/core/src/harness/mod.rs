//! Experiment runner: reads a JSON config, runs one scaling experiment and
//! writes a report pair (`<stem>.json`, `<stem>.csv`).

pub mod config;
pub mod experiments;
pub mod report;

use std::path::{Path, PathBuf};

pub use config::{ExperimentConfig, ExperimentKind};
pub use report::{ReportRow, ScalingReport};

use crate::error::Result;

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
}

/// Exit code 0 when every check passes, 2 when a check fails, 1 on error.
#[derive(Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub report: Option<ScalingReport>,
    pub paths: Option<(PathBuf, PathBuf)>,
    pub error: Option<String>,
}

pub fn run_config(cfg: &ExperimentConfig) -> Result<ScalingReport> {
    cfg.validate()?;
    match cfg.experiment {
        ExperimentKind::PerturbationScaling => experiments::exp_perturbation_scaling(cfg),
        ExperimentKind::InitialLawStability => experiments::exp_initial_law_stability(cfg),
        ExperimentKind::LogHarnack => experiments::exp_log_harnack(cfg),
    }
}

fn run_inner(config_path: &Path, overrides: &RunOverrides) -> Result<(ScalingReport, (PathBuf, PathBuf))> {
    let mut cfg = ExperimentConfig::from_file(config_path)?;
    if let Some(seed) = overrides.seed {
        cfg.seeds = vec![seed];
    }
    let report = match overrides.threads {
        Some(n) => crate::par::with_threads(n, || run_config(&cfg))?,
        None => run_config(&cfg)?,
    };
    let dir = overrides
        .out_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("mkvlab-out"));
    let stem = cfg.name.clone().unwrap_or_else(|| cfg.experiment.as_str().to_string());
    let paths = report.write(&dir, &stem)?;
    Ok((report, paths))
}

pub fn run(config_path: impl AsRef<Path>, overrides: &RunOverrides) -> RunOutcome {
    match run_inner(config_path.as_ref(), overrides) {
        Ok((report, paths)) => RunOutcome {
            exit_code: if report.verdict { 0 } else { 2 },
            report: Some(report),
            paths: Some(paths),
            error: None,
        },
        Err(e) => RunOutcome {
            exit_code: 1,
            report: None,
            paths: None,
            error: Some(e.to_string()),
        },
    }
}
