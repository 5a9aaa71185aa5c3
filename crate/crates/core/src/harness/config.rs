//! Experiment configuration files (JSON).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coefficients::FieldSpec;
use crate::error::{LabError, Result};
use crate::psi::PsiModulus;
use crate::sde::InitialLaw;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// `W_k` between marginals of a field and its perturbation, against `ε`.
    PerturbationScaling,
    /// `W_k`, `W_ψ` between McKean–Vlasov marginals from shifted initial laws.
    InitialLawStability,
    /// Log-Harnack gaps and relative entropy between marginals from two points.
    LogHarnack,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::PerturbationScaling => "perturbation_scaling",
            ExperimentKind::InitialLawStability => "initial_law_stability",
            ExperimentKind::LogHarnack => "log_harnack",
        }
    }
}

/// Directions of the perturbation `b + εu`, `a + εS`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    #[serde(default)]
    pub drift_direction: Option<Vec<f64>>,
    /// Row-major symmetric `d×d`.
    #[serde(default)]
    pub diffusion_direction: Option<Vec<f64>>,
}

/// `f(z) = floor + exp(−|z − center|² / (2 width²))`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub center: Vec<f64>,
    pub width: f64,
    pub floor: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogHarnackSpec {
    /// Start of the first process (`γ = δ_x`).
    pub x: Vec<f64>,
    /// Start of the second process (`γ̃ = δ_y`).
    pub y: Vec<f64>,
    /// Tilts `θ` of the test functions `f(z) = exp(θ·z₁)`.
    #[serde(default = "default_thetas")]
    pub thetas: Vec<f64>,
    #[serde(default)]
    pub bumps: Vec<Bump>,
    /// Test functions whose `P_t f` has a larger relative standard error are dropped.
    #[serde(default = "default_max_relative_se")]
    pub max_relative_se: f64,
    #[serde(default = "default_knn_k")]
    pub knn_k: usize,
}

fn default_thetas() -> Vec<f64> {
    (0..11).map(|j| 0.125 * 2f64.powf(j as f64 * 0.5)).collect()
}

fn default_max_relative_se() -> f64 {
    0.1
}

fn default_knn_k() -> usize {
    5
}

fn default_k() -> f64 {
    2.0
}

fn default_t_levels() -> usize {
    7
}

fn default_subsample() -> usize {
    200
}

fn default_repeats() -> usize {
    5
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub name: Option<String>,
    pub field: FieldSpec,
    #[serde(default)]
    pub perturbation: Option<Perturbation>,
    /// `γ`; the log-Harnack experiment takes its points from `log_harnack`.
    #[serde(default)]
    pub initial: Option<InitialLaw>,
    #[serde(default = "PsiModulus::linear")]
    pub psi: PsiModulus,
    #[serde(default = "default_k")]
    pub k: f64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub horizon: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Perturbation sizes; the `ε = 0` control is always added.
    #[serde(default)]
    pub epsilons: Vec<f64>,
    /// Initial shifts; the `δ = 0` control is always added.
    #[serde(default)]
    pub deltas: Vec<f64>,
    /// Unit direction of the initial shift; defaults to the first axis.
    #[serde(default)]
    pub shift_direction: Option<Vec<f64>>,
    /// Explicit evaluation times; otherwise `T·2^{−j}`, `j < t_levels`.
    #[serde(default)]
    pub t_grid: Option<Vec<f64>>,
    #[serde(default = "default_t_levels")]
    pub t_levels: usize,
    /// Atoms per subsample for `W_k` in `d > 1` and for `W_ψ`.
    #[serde(default = "default_subsample")]
    pub w_subsample: usize,
    #[serde(default = "default_repeats")]
    pub w_repeats: usize,
    #[serde(default)]
    pub log_harnack: Option<LogHarnackSpec>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn sorted_positive(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(LabError::Config(format!("`{name}`: values must be positive and finite")));
    }
    if values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(LabError::Config(format!("`{name}`: values must be strictly increasing")));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Parses JSON; errors name the offending field and its position.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            LabError::Config(format!(
                "field `{path}` (line {}, column {}): {inner}",
                inner.line(),
                inner.column()
            ))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(LabError::Config("field `n_paths`: must be positive".into()));
        }
        if self.n_steps == 0 {
            return Err(LabError::Config("field `n_steps`: must be positive".into()));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(LabError::Config("field `horizon`: must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(LabError::Config("field `seeds`: at least one seed is required".into()));
        }
        if !(self.k >= 1.0) {
            return Err(LabError::Config("field `k`: must be ≥ 1".into()));
        }
        if self.w_subsample < 2 || self.w_repeats == 0 {
            return Err(LabError::Config("fields `w_subsample`, `w_repeats`: too small".into()));
        }
        sorted_positive("epsilons", &self.epsilons)?;
        sorted_positive("deltas", &self.deltas)?;
        if let Some(grid) = &self.t_grid {
            sorted_positive("t_grid", grid)?;
            if grid.last().is_some_and(|t| *t > self.horizon * (1.0 + 1e-12)) {
                return Err(LabError::Config("field `t_grid`: times beyond the horizon".into()));
            }
        } else if self.t_levels == 0 {
            return Err(LabError::Config("field `t_levels`: must be positive".into()));
        }
        let d = self.field.dim();
        if let Some(init) = &self.initial {
            if init.dim() != d {
                return Err(LabError::Config(format!("field `initial`: dimension {} ≠ field dimension {d}", init.dim())));
            }
        }
        match self.experiment {
            ExperimentKind::PerturbationScaling => {
                if self.epsilons.is_empty() {
                    return Err(LabError::Config("field `epsilons`: required for the perturbation experiment".into()));
                }
                let p = self
                    .perturbation
                    .as_ref()
                    .ok_or_else(|| LabError::Config("field `perturbation`: required for the perturbation experiment".into()))?;
                if p.drift_direction.is_none() && p.diffusion_direction.is_none() {
                    return Err(LabError::Config("field `perturbation`: give a drift or diffusion direction".into()));
                }
            }
            ExperimentKind::InitialLawStability => {
                if self.deltas.is_empty() {
                    return Err(LabError::Config("field `deltas`: required for the stability experiment".into()));
                }
                if let Some(dir) = &self.shift_direction {
                    if dir.len() != d || !(crate::measures::norm(dir) > 0.0) {
                        return Err(LabError::Config("field `shift_direction`: must be a nonzero d-vector".into()));
                    }
                }
            }
            ExperimentKind::LogHarnack => {
                let lh = self
                    .log_harnack
                    .as_ref()
                    .ok_or_else(|| LabError::Config("field `log_harnack`: required for the log-Harnack experiment".into()))?;
                if lh.x.len() != d || lh.y.len() != d {
                    return Err(LabError::Config("field `log_harnack`: x and y must match the field dimension".into()));
                }
                if lh.x == lh.y {
                    return Err(LabError::Config("field `log_harnack`: x and y must differ".into()));
                }
                if lh.bumps.iter().any(|b| b.center.len() != d || !(b.width > 0.0) || !(b.floor > 0.0)) {
                    return Err(LabError::Config("field `log_harnack.bumps`: need d-dimensional centers, positive widths and floors".into()));
                }
            }
        }
        Ok(())
    }

    /// Evaluation times, each snapped to the simulation grid.
    pub fn times(&self) -> Result<Vec<f64>> {
        let raw: Vec<f64> = match &self.t_grid {
            Some(g) => g.clone(),
            None => (0..self.t_levels).rev().map(|j| self.horizon * 0.5f64.powi(j as i32)).collect(),
        };
        let dt = self.horizon / self.n_steps as f64;
        raw.into_iter()
            .map(|t| {
                let m = (t / dt).round();
                if (m * dt - t).abs() > 1e-9 * self.horizon || m < 1.0 {
                    Err(LabError::Config(format!(
                        "t = {t} is not a positive node of the grid with {} steps",
                        self.n_steps
                    )))
                } else {
                    Ok(t)
                }
            })
            .collect()
    }

    /// Grid indices of [`ExperimentConfig::times`].
    pub fn time_steps(&self) -> Result<Vec<usize>> {
        let dt = self.horizon / self.n_steps as f64;
        Ok(self.times()?.iter().map(|t| (t / dt).round() as usize).collect())
    }

    /// SHA-256 of the canonical JSON serialisation.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "experiment": "perturbation_scaling",
        "field": {"family": "frozen", "params": {"dim": 1, "drift_matrix": [-1.0]}},
        "perturbation": {"drift_direction": [1.0]},
        "initial": {"kind": "point", "x": [0.0]},
        "n_paths": 100,
        "n_steps": 64,
        "horizon": 1.0,
        "epsilons": [0.1, 0.2]
    }"#;

    #[test]
    fn parses_and_hashes() {
        let cfg = ExperimentConfig::from_json(BASE).unwrap();
        assert_eq!(cfg.times().unwrap().len(), 7);
        assert_eq!(cfg.time_steps().unwrap()[0], 1);
        assert_eq!(cfg.hash(), ExperimentConfig::from_json(BASE).unwrap().hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn negative_paths_name_the_field() {
        let text = BASE.replace("\"n_paths\": 100", "\"n_paths\": -5");
        let err = ExperimentConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("n_paths") && err.contains("line"), "{err}");
    }

    #[test]
    fn rejects_bad_grids() {
        let text = BASE.replace("[0.1, 0.2]", "[0.2, 0.1]");
        assert!(ExperimentConfig::from_json(&text).unwrap_err().to_string().contains("epsilons"));
        let text = BASE.replace("\"n_steps\": 64", "\"n_steps\": 10");
        assert!(ExperimentConfig::from_json(&text).unwrap().times().is_err());
        let text = BASE.replace("\"horizon\"", "\"horizn\"");
        assert!(ExperimentConfig::from_json(&text).is_err());
    }
}
