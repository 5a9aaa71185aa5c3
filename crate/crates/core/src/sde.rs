//! Euler–Maruyama simulation of `dX_t = b(t, X_t)dt + σ(t, X_t)dW_t`,
//! `σ = √(2a)`, with coefficients frozen along an optional measure flow.
//!
//! Every path owns a ChaCha stream keyed by `(seed, path index)`, so the
//! ensemble does not depend on how paths are scheduled across threads.

use std::io::{Read, Write};
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::coefficients::{CoefficientField, FrozenField};
use crate::error::{LabError, Result};
use crate::linalg;
use crate::measures::{norm, EmpiricalMeasure};
use crate::mkv::MeasureFlow;
use crate::rng::{self, StreamRng};
use crate::stats::compensated_sum;

/// Drift magnitudes above this abort the simulation.
pub const DRIFT_LIMIT: f64 = 1e6;

const INITIAL_STREAM: u64 = 0x1417_1a1e;
const BINARY_MAGIC: &[u8; 8] = b"MKVPATHS";

/// Initial condition: a fixed point or a law to sample from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialLaw {
    Point { x: Vec<f64> },
    Measure { measure: EmpiricalMeasure },
}

impl InitialLaw {
    pub fn point(x: &[f64]) -> Self {
        InitialLaw::Point { x: x.to_vec() }
    }

    pub fn measure(m: EmpiricalMeasure) -> Self {
        InitialLaw::Measure { measure: m }
    }

    pub fn dim(&self) -> usize {
        match self {
            InitialLaw::Point { x } => x.len(),
            InitialLaw::Measure { measure } => measure.dim(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            InitialLaw::Point { x } => format!("point {x:?}"),
            InitialLaw::Measure { measure } => format!("empirical measure with {} atoms", measure.len()),
        }
    }

    /// The law as an empirical measure.
    pub fn as_measure(&self) -> EmpiricalMeasure {
        match self {
            InitialLaw::Point { x } => EmpiricalMeasure::dirac(x),
            InitialLaw::Measure { measure } => measure.clone(),
        }
    }

    /// `n` initial states, row-major. A uniform measure with exactly `n`
    /// atoms is used atom by atom; otherwise atoms are drawn by weight from
    /// a stream keyed by `(seed, particle index)`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        match self {
            InitialLaw::Point { x } => x.iter().copied().cycle().take(n * x.len()).collect(),
            InitialLaw::Measure { measure } if measure.is_uniform() && measure.len() == n => measure.points().to_vec(),
            InitialLaw::Measure { measure } => {
                let mut cumulative = Vec::with_capacity(measure.len());
                let mut acc = 0.0;
                for w in measure.weights() {
                    acc += w;
                    cumulative.push(acc);
                }
                let key = rng::derive_seed(seed, INITIAL_STREAM);
                let picks = crate::par::map_indexed(n, |i| {
                    let u: f64 = rand::Rng::random::<f64>(&mut rng::stream(key, i as u64)) * acc;
                    cumulative.partition_point(|c| *c <= u).min(measure.len() - 1)
                });
                picks.into_iter().flat_map(|j| measure.point(j).to_vec()).collect()
            }
        }
    }
}

/// A classical diffusion on `[start, end]`, with coefficients frozen along
/// `flow` when the field depends on the law.
#[derive(Clone)]
pub struct DiffusionSpec {
    pub field: Arc<dyn CoefficientField>,
    pub flow: Option<Arc<MeasureFlow>>,
    pub start: f64,
    pub end: f64,
}

impl DiffusionSpec {
    pub fn new(field: Arc<dyn CoefficientField>, start: f64, end: f64) -> Result<Self> {
        if !(start >= 0.0 && end > start && end.is_finite()) {
            return Err(LabError::domain(format!("need 0 ≤ s < T, got s = {start}, T = {end}")));
        }
        Ok(Self {
            field,
            flow: None,
            start,
            end,
        })
    }

    pub fn with_flow(mut self, flow: Arc<MeasureFlow>) -> Self {
        self.flow = Some(flow);
        self
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn step(&self, n_steps: usize) -> f64 {
        (self.end - self.start) / n_steps as f64
    }

    /// Uniform grid `s + mΔt`, `m = 0..=n_steps`.
    pub fn grid(&self, n_steps: usize) -> Vec<f64> {
        let dt = self.step(n_steps);
        (0..=n_steps)
            .map(|m| if m == n_steps { self.end } else { self.start + m as f64 * dt })
            .collect()
    }

    /// Time at which step `m` evaluates the coefficients.
    pub(crate) fn eval_time(&self, m: usize, n_steps: usize) -> f64 {
        let dt = self.step(n_steps);
        let t = self.start + m as f64 * dt;
        if self.field.time_singular() {
            t + 0.5 * dt
        } else {
            t
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    /// Keep every `record_stride`-th grid node (the last node is always kept).
    pub record_stride: usize,
}

impl SimulationOptions {
    pub fn new(n_paths: usize, n_steps: usize, seed: u64) -> Self {
        Self {
            n_paths,
            n_steps,
            seed,
            record_stride: 1,
        }
    }

    pub fn with_record_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_paths == 0 || self.n_steps == 0 || self.record_stride == 0 {
            return Err(LabError::domain(format!(
                "need N ≥ 1, n_steps ≥ 1 and record stride ≥ 1 (got {}, {}, {})",
                self.n_paths, self.n_steps, self.record_stride
            )));
        }
        Ok(())
    }

    pub(crate) fn recorded_steps(&self) -> Vec<usize> {
        let mut steps: Vec<usize> = (0..=self.n_steps).step_by(self.record_stride).collect();
        if *steps.last().unwrap() != self.n_steps {
            steps.push(self.n_steps);
        }
        steps
    }
}

/// Paths sampled on the recorded nodes of a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub dim: usize,
    pub n_paths: usize,
    pub n_steps: usize,
    pub start: f64,
    pub end: f64,
    pub seed: u64,
    pub initial: String,
    /// Grid indices of the recorded nodes.
    pub recorded_steps: Vec<usize>,
    pub times: Vec<f64>,
    /// Node-major: `states[(node · n_paths + path) · dim + c]`.
    pub states: Vec<f64>,
    /// `sup_t |X_t|` over every grid node, recorded or not.
    pub sup_norm: Vec<f64>,
}

/// Per-path scratch buffers for [`em_step`].
pub(crate) struct StepScratch {
    drift: Vec<f64>,
    a: Vec<f64>,
    sigma: Vec<f64>,
    xi: Vec<f64>,
}

impl StepScratch {
    pub(crate) fn new(d: usize) -> Self {
        Self {
            drift: vec![0.0; d],
            a: vec![0.0; d * d],
            sigma: vec![0.0; d * d],
            xi: vec![0.0; d],
        }
    }
}

/// One Euler–Maruyama step `x ← x + bΔt + σ√Δt ξ`.
pub(crate) fn em_step(
    frozen: &dyn FrozenField,
    x: &mut [f64],
    dt: f64,
    sqrt_dt: f64,
    rng: &mut StreamRng,
    s: &mut StepScratch,
    path: usize,
    step: usize,
) -> Result<()> {
    let d = x.len();
    frozen.drift(x, &mut s.drift);
    let size = norm(&s.drift);
    if !(size <= DRIFT_LIMIT) {
        return Err(LabError::BlowUp {
            path,
            step,
            reason: format!("|b| = {size:.6e} exceeds {DRIFT_LIMIT:e}"),
        });
    }
    frozen.diffusion(x, &mut s.a);
    linalg::diffusion_to_sigma(&s.a, d, &mut s.sigma)
        .map_err(|e| LabError::NotSpd(format!("path {path}, step {step}: {e}")))?;
    for v in s.xi.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
    for i in 0..d {
        let row = &s.sigma[i * d..(i + 1) * d];
        let noise: f64 = row.iter().zip(&s.xi).map(|(a, b)| a * b).sum();
        x[i] += s.drift[i] * dt + sqrt_dt * noise;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LabError::BlowUp {
            path,
            step,
            reason: "non-finite state".into(),
        });
    }
    Ok(())
}

/// Checks that `flow` carries one measure per node of the simulation grid.
pub(crate) fn check_flow_grid(flow: &MeasureFlow, grid: &[f64]) -> Result<()> {
    if flow.times.len() != grid.len() {
        return Err(LabError::GridMismatch(format!(
            "flow has {} nodes, simulation grid has {}",
            flow.times.len(),
            grid.len()
        )));
    }
    let scale = grid.last().copied().unwrap_or(1.0).abs().max(1.0);
    if let Some((i, (a, b))) = flow
        .times
        .iter()
        .zip(grid)
        .enumerate()
        .find(|(_, (a, b))| (*a - *b).abs() > 1e-9 * scale)
    {
        return Err(LabError::GridMismatch(format!("node {i}: flow time {a} vs grid time {b}")));
    }
    Ok(())
}

/// Simulates `opts.n_paths` independent paths from `initial`.
pub fn euler_maruyama(spec: &DiffusionSpec, initial: &InitialLaw, opts: SimulationOptions) -> Result<PathEnsemble> {
    opts.validate()?;
    let d = spec.dim();
    if initial.dim() != d {
        return Err(LabError::DimensionMismatch {
            expected: d,
            got: initial.dim(),
        });
    }
    let n_steps = opts.n_steps;
    let grid = spec.grid(n_steps);
    let flow = match (&spec.flow, spec.field.is_measure_dependent()) {
        (Some(flow), _) => {
            check_flow_grid(flow, &grid)?;
            Some(flow.as_ref())
        }
        (None, true) => {
            return Err(LabError::domain(format!(
                "{} depends on the law; supply a measure flow",
                spec.field.describe()
            )))
        }
        (None, false) => None,
    };
    let frozen: Vec<Box<dyn FrozenField + '_>> = (0..n_steps)
        .map(|m| spec.field.bind(spec.eval_time(m, n_steps), flow.map(|f| &f.measures[m])))
        .collect();
    let dt = spec.step(n_steps);
    let sqrt_dt = dt.sqrt();
    let recorded = opts.recorded_steps();
    let starts = initial.sample(opts.n_paths, opts.seed);
    let per_path = crate::par::try_map_indexed(opts.n_paths, |p| -> Result<(Vec<f64>, f64)> {
        let mut g = rng::stream(opts.seed, p as u64);
        let mut scratch = StepScratch::new(d);
        let mut x = starts[p * d..(p + 1) * d].to_vec();
        let mut out = Vec::with_capacity(recorded.len() * d);
        let mut sup = norm(&x);
        let mut next = 0;
        if recorded[0] == 0 {
            out.extend_from_slice(&x);
            next = 1;
        }
        for m in 0..n_steps {
            em_step(frozen[m].as_ref(), &mut x, dt, sqrt_dt, &mut g, &mut scratch, p, m)?;
            sup = sup.max(norm(&x));
            if next < recorded.len() && recorded[next] == m + 1 {
                out.extend_from_slice(&x);
                next += 1;
            }
        }
        Ok((out, sup))
    })?;
    let n_rec = recorded.len();
    let mut states = vec![0.0; n_rec * opts.n_paths * d];
    let mut sup_norm = Vec::with_capacity(opts.n_paths);
    for (p, (path, sup)) in per_path.into_iter().enumerate() {
        for node in 0..n_rec {
            let dst = (node * opts.n_paths + p) * d;
            states[dst..dst + d].copy_from_slice(&path[node * d..(node + 1) * d]);
        }
        sup_norm.push(sup);
    }
    Ok(PathEnsemble {
        dim: d,
        n_paths: opts.n_paths,
        n_steps,
        start: spec.start,
        end: spec.end,
        seed: opts.seed,
        initial: initial.describe(),
        times: recorded.iter().map(|&m| grid[m]).collect(),
        recorded_steps: recorded,
        states,
        sup_norm,
    })
}

impl PathEnsemble {
    pub fn step(&self) -> f64 {
        (self.end - self.start) / self.n_steps as f64
    }

    /// States of every path at recorded node `node`, row-major.
    pub fn node_states(&self, node: usize) -> &[f64] {
        let len = self.n_paths * self.dim;
        &self.states[node * len..(node + 1) * len]
    }

    pub fn state(&self, node: usize, path: usize) -> &[f64] {
        let i = (node * self.n_paths + path) * self.dim;
        &self.states[i..i + self.dim]
    }

    /// Index of the recorded node at `t`. Off-node times within half a step
    /// snap to the nearest node with a warning.
    pub fn node_index(&self, t: f64) -> Result<usize> {
        let dt = self.step();
        if t < self.start - 0.5 * dt || t > self.end + 0.5 * dt || !t.is_finite() {
            return Err(LabError::domain(format!("t = {t} outside [{}, {}]", self.start, self.end)));
        }
        let (idx, gap) = self
            .times
            .iter()
            .map(|s| (s - t).abs())
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("ensemble has recorded nodes");
        if gap <= 1e-9 * dt {
            return Ok(idx);
        }
        if gap <= 0.5 * dt {
            log::warn!("t = {t} is off the grid; using node t = {}", self.times[idx]);
            return Ok(idx);
        }
        Err(LabError::GridMismatch(format!(
            "t = {t} was not recorded (nearest node {})",
            self.times[idx]
        )))
    }

    /// Uniform empirical law of the `N` states at `t`.
    pub fn marginal_law(&self, t: f64) -> Result<EmpiricalMeasure> {
        let node = self.node_index(t)?;
        EmpiricalMeasure::uniform(self.dim, self.node_states(node).to_vec())
    }

    /// Monte Carlo estimate of `E[sup_t |X_t|^k]`.
    pub fn moment_sup_estimate(&self, k: f64) -> f64 {
        compensated_sum(self.sup_norm.iter().map(|s| s.powf(k))) / self.n_paths as f64
    }

    /// Rows `t,path,x1..xd`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string(), "path".to_string()];
        header.extend((1..=self.dim).map(|c| format!("x{c}")));
        w.write_record(&header)?;
        for (node, t) in self.times.iter().enumerate() {
            for p in 0..self.n_paths {
                let mut row = vec![format!("{t:e}"), p.to_string()];
                row.extend(self.state(node, p).iter().map(|v| format!("{v:e}")));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Little-endian binary dump, read back by [`PathEnsemble::read_binary`].
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(BINARY_MAGIC)?;
        for v in [self.dim, self.n_paths, self.n_steps, self.times.len()] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        w.write_all(&self.seed.to_le_bytes())?;
        for v in [self.start, self.end] {
            w.write_all(&v.to_le_bytes())?;
        }
        let desc = self.initial.as_bytes();
        w.write_all(&(desc.len() as u64).to_le_bytes())?;
        w.write_all(desc)?;
        for &s in &self.recorded_steps {
            w.write_all(&(s as u64).to_le_bytes())?;
        }
        for v in self.times.iter().chain(&self.states).chain(&self.sup_norm) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(LabError::Config("not a path dump".into()));
        }
        let mut word = [0u8; 8];
        let mut u64s = |r: &mut R, n: usize| -> Result<Vec<u64>> {
            (0..n)
                .map(|_| {
                    r.read_exact(&mut word)?;
                    Ok(u64::from_le_bytes(word))
                })
                .collect()
        };
        let head = u64s(&mut r, 5)?;
        let (dim, n_paths, n_steps, n_rec, seed) = (head[0] as usize, head[1] as usize, head[2] as usize, head[3] as usize, head[4]);
        let bounds = u64s(&mut r, 2)?;
        let desc_len = u64s(&mut r, 1)?[0] as usize;
        let mut desc = vec![0u8; desc_len];
        r.read_exact(&mut desc)?;
        let recorded_steps = u64s(&mut r, n_rec)?.into_iter().map(|v| v as usize).collect();
        let floats = |r: &mut R, n: usize| -> Result<Vec<f64>> {
            let mut buf = [0u8; 8];
            (0..n)
                .map(|_| {
                    r.read_exact(&mut buf)?;
                    Ok(f64::from_le_bytes(buf))
                })
                .collect()
        };
        let times = floats(&mut r, n_rec)?;
        let states = floats(&mut r, n_rec * n_paths * dim)?;
        let sup_norm = floats(&mut r, n_paths)?;
        Ok(Self {
            dim,
            n_paths,
            n_steps,
            start: f64::from_bits(bounds[0]),
            end: f64::from_bits(bounds[1]),
            seed,
            initial: String::from_utf8(desc).map_err(|e| LabError::Config(e.to_string()))?,
            recorded_steps,
            times,
            states,
            sup_norm,
        })
    }
}
