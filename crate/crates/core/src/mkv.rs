//! McKean–Vlasov dynamics: the interacting particle system and the Picard
//! iteration `μ ↦ Φ(μ)` on measure flows, where `Φ(μ)_t` is the law at `t`
//! of the diffusion with coefficients frozen along `μ`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::distances::{w_psi_primal, wasserstein_k, wasserstein_k_sampled, WkMethod, EXACT_LP_MAX_CELLS};
use crate::error::{LabError, Result};
use crate::measures::{norm, EmpiricalMeasure};
use crate::psi::PsiModulus;
use crate::rng;
use crate::sde::{check_flow_grid, em_step, euler_maruyama, DiffusionSpec, InitialLaw, PathEnsemble, SimulationOptions, StepScratch};

/// Atoms per measure above which `W_ψ` inside `ρ_λ` is computed on subsamples.
pub const DEFAULT_RHO_SUBSAMPLE: usize = 100;

/// One empirical law per node of a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureFlow {
    pub times: Vec<f64>,
    pub measures: Vec<EmpiricalMeasure>,
}

impl MeasureFlow {
    pub fn new(times: Vec<f64>, measures: Vec<EmpiricalMeasure>) -> Result<Self> {
        if times.is_empty() || times.len() != measures.len() {
            return Err(LabError::GridMismatch(format!(
                "{} times for {} measures",
                times.len(),
                measures.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(LabError::GridMismatch("flow times must increase strictly".into()));
        }
        let d = measures[0].dim();
        if measures.iter().any(|m| m.dim() != d) {
            return Err(LabError::domain("flow measures have mixed dimensions"));
        }
        Ok(Self { times, measures })
    }

    /// `μ_t ≡ γ` on `times`.
    pub fn constant(times: Vec<f64>, gamma: &EmpiricalMeasure) -> Result<Self> {
        let measures = vec![gamma.clone(); times.len()];
        Self::new(times, measures)
    }

    /// Empirical marginals on the recorded nodes of an ensemble.
    pub fn from_ensemble(ens: &PathEnsemble) -> Result<Self> {
        let measures = (0..ens.times.len())
            .map(|node| EmpiricalMeasure::uniform(ens.dim, ens.node_states(node).to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(ens.times.clone(), measures)
    }

    pub fn dim(&self) -> usize {
        self.measures[0].dim()
    }

    /// Measure at the node within `10⁻⁹` of `t`.
    pub fn at(&self, t: f64) -> Result<&EmpiricalMeasure> {
        let scale = self.times.last().unwrap().abs().max(1.0);
        self.times
            .iter()
            .position(|s| (s - t).abs() <= 1e-9 * scale)
            .map(|i| &self.measures[i])
            .ok_or_else(|| LabError::GridMismatch(format!("t = {t} is not a node of the flow")))
    }

    fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.times.len() != other.times.len()
            || self.times.iter().zip(&other.times).any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0))
        {
            return Err(LabError::GridMismatch("flows live on different grids".into()));
        }
        Ok(())
    }

    /// Rows `t,weight,x1..xd` for every `stride`-th node (and the last).
    pub fn write_csv(&self, path: impl AsRef<Path>, stride: usize) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string(), "weight".to_string()];
        header.extend((1..=self.dim()).map(|c| format!("x{c}")));
        w.write_record(&header)?;
        let last = self.times.len() - 1;
        for (i, (t, m)) in self.times.iter().zip(&self.measures).enumerate() {
            if i % stride.max(1) != 0 && i != last {
                continue;
            }
            for (x, wt) in m.atoms() {
                let mut row = vec![format!("{t:e}"), format!("{wt:e}")];
                row.extend(x.iter().map(|v| format!("{v:e}")));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Paths of the particle system and the flow of their empirical laws.
#[derive(Debug, Clone)]
pub struct ParticleRun {
    pub ensemble: PathEnsemble,
    pub flow: MeasureFlow,
}

/// `N` particles driven by `b(t, x, μᴺ_t)`, `a(t, x, μᴺ_t)` with `μᴺ_t` the
/// current empirical law. Noise streams match [`euler_maruyama`], so a field
/// that ignores the law reproduces it bit for bit.
pub fn particle_simulate(spec: &DiffusionSpec, initial: &InitialLaw, opts: SimulationOptions) -> Result<ParticleRun> {
    if opts.n_paths == 0 || opts.n_steps == 0 || opts.record_stride == 0 {
        return Err(LabError::domain("need N ≥ 1, n_steps ≥ 1 and record stride ≥ 1"));
    }
    let d = spec.dim();
    if initial.dim() != d {
        return Err(LabError::DimensionMismatch {
            expected: d,
            got: initial.dim(),
        });
    }
    let n = opts.n_paths;
    let n_steps = opts.n_steps;
    let grid = spec.grid(n_steps);
    let dt = spec.step(n_steps);
    let sqrt_dt = dt.sqrt();
    let recorded = opts.recorded_steps();
    let mut x = initial.sample(n, opts.seed);
    let mut aux: Vec<(rng::StreamRng, StepScratch, f64)> = (0..n)
        .map(|p| (rng::stream(opts.seed, p as u64), StepScratch::new(d), norm(&x[p * d..(p + 1) * d])))
        .collect();
    let mut states = Vec::with_capacity(recorded.len() * n * d);
    let mut next = 0;
    if recorded[0] == 0 {
        states.extend_from_slice(&x);
        next = 1;
    }
    for m in 0..n_steps {
        let law = EmpiricalMeasure::uniform(d, x.clone())?;
        let frozen = spec.field.bind(spec.eval_time(m, n_steps), Some(&law));
        let frozen = frozen.as_ref();
        crate::par::try_for_each_chunk_zip_mut(&mut x, d, &mut aux, |p, xp, (g, scratch, sup)| {
            em_step(frozen, xp, dt, sqrt_dt, g, scratch, p, m)?;
            *sup = sup.max(norm(xp));
            Ok::<(), LabError>(())
        })?;
        if next < recorded.len() && recorded[next] == m + 1 {
            states.extend_from_slice(&x);
            next += 1;
        }
    }
    let ensemble = PathEnsemble {
        dim: d,
        n_paths: n,
        n_steps,
        start: spec.start,
        end: spec.end,
        seed: opts.seed,
        initial: initial.describe(),
        times: recorded.iter().map(|&m| grid[m]).collect(),
        recorded_steps: recorded,
        states,
        sup_norm: aux.iter().map(|a| a.2).collect(),
    };
    let flow = MeasureFlow::from_ensemble(&ensemble)?;
    Ok(ParticleRun { ensemble, flow })
}

fn same_measure(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> bool {
    const TOL: f64 = 1e-12;
    if a.dim() != b.dim() {
        return false;
    }
    if a.len() == b.len()
        && a.points().iter().zip(b.points()).all(|(x, y)| (x - y).abs() <= TOL)
        && a.weights().iter().zip(b.weights()).all(|(x, y)| (x - y).abs() <= TOL)
    {
        return true;
    }
    if a.len() * b.len() > 4_000_000 {
        return false;
    }
    let (_, wa, wb) = crate::measures::union_support(a, b);
    wa.iter().zip(&wb).all(|(x, y)| (x - y).abs() <= TOL)
}

/// `Φ(μ)`: the diffusion with coefficients frozen along `input_flow`,
/// started from `initial`, returned as its flow of empirical laws on every
/// grid node. A fixed `seed` reuses the same noise across calls.
pub fn phi_map(spec: &DiffusionSpec, input_flow: &Arc<MeasureFlow>, initial: &EmpiricalMeasure, n_paths: usize, n_steps: usize, seed: u64) -> Result<MeasureFlow> {
    check_flow_grid(input_flow, &spec.grid(n_steps))?;
    if !same_measure(&input_flow.measures[0], initial) {
        return Err(LabError::Inconsistent("initial measure differs from the input flow at time 0".into()));
    }
    let frozen = spec.clone().with_flow(input_flow.clone());
    let ens = euler_maruyama(&frozen, &InitialLaw::measure(initial.clone()), SimulationOptions::new(n_paths, n_steps, seed))?;
    MeasureFlow::from_ensemble(&ens)
}

/// Options for the node distances behind `ρ_λ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RhoOptions {
    pub psi: PsiModulus,
    pub k: f64,
    /// `W_ψ` uses stratified subsamples of this many atoms beyond the exact-LP limit.
    pub subsample: usize,
    pub seed: u64,
}

impl RhoOptions {
    pub fn new(psi: PsiModulus, k: f64) -> Self {
        Self {
            psi,
            k,
            subsample: DEFAULT_RHO_SUBSAMPLE,
            seed: 0,
        }
    }
}

/// `W_ψ + W_k` between two flows at every node.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowDistanceProfile {
    pub times: Vec<f64>,
    pub w_psi: Vec<f64>,
    pub w_k: Vec<f64>,
    /// Subsample size used for `W_ψ`, when any node was subsampled.
    pub subsample: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoValue {
    pub value: f64,
    pub at_time: f64,
}

impl FlowDistanceProfile {
    /// `sup_t e^{−λt}(W_ψ + W_k)` over the nodes.
    pub fn rho(&self, lambda: f64) -> RhoValue {
        let mut best = RhoValue {
            value: 0.0,
            at_time: self.times[0],
        };
        for ((t, a), b) in self.times.iter().zip(&self.w_psi).zip(&self.w_k) {
            let v = (-lambda * t).exp() * (a + b);
            if v > best.value {
                best = RhoValue { value: v, at_time: *t };
            }
        }
        best
    }
}

fn node_w_psi(a: &EmpiricalMeasure, b: &EmpiricalMeasure, opts: &RhoOptions) -> Result<(f64, bool)> {
    if a.len() * b.len() <= EXACT_LP_MAX_CELLS && a.len() + b.len() <= 2 * opts.subsample {
        return Ok((w_psi_primal(a, b, &opts.psi)?.value, false));
    }
    let sa = a.stratified_subsample(opts.subsample, opts.seed);
    let sb = b.stratified_subsample(opts.subsample, opts.seed);
    Ok((w_psi_primal(&sa, &sb, &opts.psi)?.value, true))
}

fn node_w_k(a: &EmpiricalMeasure, b: &EmpiricalMeasure, opts: &RhoOptions) -> Result<f64> {
    if a.dim() == 1 {
        return Ok(wasserstein_k(a, b, opts.k, WkMethod::Quantile1d)?.value);
    }
    if a.len() * b.len() <= EXACT_LP_MAX_CELLS {
        return Ok(wasserstein_k(a, b, opts.k, WkMethod::ExactLp)?.value);
    }
    Ok(wasserstein_k_sampled(a, b, opts.k, opts.subsample, 1, opts.seed)?.value)
}

pub fn flow_distance_profile(flow1: &MeasureFlow, flow2: &MeasureFlow, opts: &RhoOptions) -> Result<FlowDistanceProfile> {
    flow1.check_same_grid(flow2)?;
    let nodes = crate::par::try_map_indexed(flow1.times.len(), |i| -> Result<(f64, bool, f64)> {
        let (a, b) = (&flow1.measures[i], &flow2.measures[i]);
        if a == b {
            return Ok((0.0, false, 0.0));
        }
        let (wp, sub) = node_w_psi(a, b, opts)?;
        Ok((wp, sub, node_w_k(a, b, opts)?))
    })?;
    Ok(FlowDistanceProfile {
        times: flow1.times.clone(),
        subsample: nodes.iter().any(|n| n.1).then_some(opts.subsample),
        w_psi: nodes.iter().map(|n| n.0).collect(),
        w_k: nodes.iter().map(|n| n.2).collect(),
    })
}

/// `ρ_λ(μ, μ̃) = sup_t e^{−λt}(W_ψ + W_k)(μ_t, μ̃_t)` over the grid nodes.
pub fn rho_lambda(flow1: &MeasureFlow, flow2: &MeasureFlow, lambda: f64, opts: &RhoOptions) -> Result<RhoValue> {
    if !(lambda >= 0.0) {
        return Err(LabError::domain(format!("lambda must be ≥ 0, got {lambda}")));
    }
    Ok(flow_distance_profile(flow1, flow2, opts)?.rho(lambda))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PicardOptions {
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub rho: RhoOptions,
    /// Extra `λ` values at which the same iterates are re-measured.
    #[serde(default)]
    pub lambda_sweep: Vec<f64>,
    /// Run directory for `state.json` and per-iteration flow CSVs.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_csv_stride")]
    pub flow_csv_stride: usize,
}

fn default_csv_stride() -> usize {
    10
}

impl PicardOptions {
    pub fn new(lambda: f64, tol: f64, max_iter: usize, rho: RhoOptions) -> Self {
        Self {
            lambda,
            tol,
            max_iter,
            rho,
            lambda_sweep: Vec::new(),
            output_dir: None,
            flow_csv_stride: default_csv_stride(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PicardStep {
    pub iteration: usize,
    pub rho: f64,
    pub at_time: f64,
    /// `ρ⁽ⁿ⁾ / ρ⁽ⁿ⁻¹⁾`, absent when the previous distance vanished.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub rho: Vec<f64>,
    pub ratios: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PicardState {
    /// Number of maps applied after the warm-up map.
    pub iterations: usize,
    pub lambda: f64,
    pub tol: f64,
    /// `ρ_λ(Φ(γ), γ)` between the first image and the constant start.
    pub warm_up_rho: f64,
    pub history: Vec<PicardStep>,
    pub converged: bool,
    pub non_contraction: bool,
    pub seed: u64,
    pub seed_policy: String,
    pub n_paths: usize,
    pub n_steps: usize,
    pub subsample: Option<usize>,
    pub sweep: Vec<SweepRow>,
    #[serde(skip)]
    pub flow: Option<Arc<MeasureFlow>>,
}

impl PicardState {
    pub fn final_flow(&self) -> &MeasureFlow {
        self.flow.as_ref().expect("solver keeps the final flow")
    }

    pub fn rho_history(&self) -> Vec<f64> {
        self.history.iter().map(|s| s.rho).collect()
    }
}

/// The `N` starting particles shared by every Picard map.
pub fn initial_particles(initial: &InitialLaw, n: usize, seed: u64) -> Result<EmpiricalMeasure> {
    EmpiricalMeasure::uniform(initial.dim(), initial.sample(n, seed))
}

/// Iterates `flow ← Φ(flow)` from the constant flow at the sampled initial
/// law, with common random numbers. The first map (from the constant flow)
/// is a warm-up; iteration `n ≥ 1` records `ρ_λ(flowₙ, flowₙ₋₁)` and stops
/// once it drops below `tol`, after `max_iter` maps, or after three
/// consecutive ratios above 1.
pub fn picard_solve(spec: &DiffusionSpec, initial: &InitialLaw, n_paths: usize, n_steps: usize, seed: u64, opts: &PicardOptions) -> Result<PicardState> {
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(LabError::domain("need tol > 0 and max_iter ≥ 1"));
    }
    if !(opts.lambda >= 0.0) || opts.lambda_sweep.iter().any(|l| !(*l >= 0.0)) {
        return Err(LabError::domain("lambda values must be ≥ 0"));
    }
    if n_paths == 0 || n_steps == 0 {
        return Err(LabError::domain("need N ≥ 1 and n_steps ≥ 1"));
    }
    if let Some(dir) = &opts.output_dir {
        fs::create_dir_all(dir)?;
    }
    let gamma = initial_particles(initial, n_paths, seed)?;
    let constant = Arc::new(MeasureFlow::constant(spec.grid(n_steps), &gamma)?);
    let mut current = Arc::new(phi_map(spec, &constant, &gamma, n_paths, n_steps, seed)?);
    let warm = flow_distance_profile(&current, &constant, &opts.rho)?;
    let mut subsample = warm.subsample;
    let mut profiles = vec![warm];
    drop(constant);
    let write_flow = |flow: &MeasureFlow, n: usize| -> Result<()> {
        if let Some(dir) = &opts.output_dir {
            flow.write_csv(dir.join(format!("flow_{n:03}.csv")), opts.flow_csv_stride)?;
        }
        Ok(())
    };
    write_flow(&current, 0)?;
    let mut history = Vec::new();
    let mut converged = false;
    let mut non_contraction = false;
    let mut above_one = 0;
    for n in 1..=opts.max_iter {
        let next = Arc::new(phi_map(spec, &current, &gamma, n_paths, n_steps, seed)?);
        let profile = flow_distance_profile(&next, &current, &opts.rho)?;
        subsample = subsample.or(profile.subsample);
        let r = profile.rho(opts.lambda);
        let prev = history.last().map(|s: &PicardStep| s.rho).unwrap_or_else(|| profiles[0].rho(opts.lambda).value);
        let ratio = (prev > 0.0).then(|| r.value / prev);
        log::info!("picard iteration {n}: rho = {:.6e}", r.value);
        history.push(PicardStep {
            iteration: n,
            rho: r.value,
            at_time: r.at_time,
            ratio,
        });
        profiles.push(profile);
        write_flow(&next, n)?;
        current = next;
        if r.value < opts.tol {
            converged = true;
            break;
        }
        above_one = if ratio.is_some_and(|q| q > 1.0) { above_one + 1 } else { 0 };
        if above_one >= 3 {
            non_contraction = true;
            log::warn!("rho_lambda grew for three consecutive iterations; stopping");
            break;
        }
    }
    let sweep = opts
        .lambda_sweep
        .iter()
        .map(|&lambda| {
            let rho: Vec<f64> = profiles.iter().map(|p| p.rho(lambda).value).collect();
            let ratios = rho.windows(2).map(|w| (w[0] > 0.0).then(|| w[1] / w[0])).collect();
            SweepRow { lambda, rho, ratios }
        })
        .collect();
    let state = PicardState {
        iterations: history.len(),
        lambda: opts.lambda,
        tol: opts.tol,
        warm_up_rho: profiles[0].rho(opts.lambda).value,
        history,
        converged,
        non_contraction,
        seed,
        seed_policy: format!("common random numbers: every map reuses seed {seed}"),
        n_paths,
        n_steps,
        subsample,
        sweep,
        flow: Some(current),
    };
    if let Some(dir) = &opts.output_dir {
        fs::write(dir.join("state.json"), serde_json::to_string_pretty(&state)?)?;
    }
    Ok(state)
}

/// Bootstrap scale of sampling noise in `W₂`: the `level` quantile of
/// `W₂(μ*, μ)` over resamples `μ*` of the uniform sample `μ`.
pub fn bootstrap_w2_tolerance(sample: &EmpiricalMeasure, replicates: usize, level: f64, seed: u64) -> Result<f64> {
    if replicates == 0 || sample.is_empty() {
        return Err(LabError::domain("bootstrap needs replicates and a nonempty sample"));
    }
    let n = sample.len();
    let d = sample.dim();
    let mut values = crate::par::try_map_indexed(replicates, |r| -> Result<f64> {
        let mut g = rng::stream(seed, r as u64);
        let pts: Vec<f64> = (0..n)
            .flat_map(|_| sample.point(rand::Rng::random_range(&mut g, 0..n)).to_vec())
            .collect();
        let resample = EmpiricalMeasure::uniform(d, pts)?;
        Ok(wasserstein_k_sampled(&resample, sample, 2.0, 200, 1, seed)?.value)
    })?;
    values.sort_by(f64::total_cmp);
    Ok(crate::stats::quantile_sorted(&values, level))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{assemble_exa, AffineField, CoefficientField, ExaKernels};
    use crate::stats::{mean, std_error, variance, variance_std_error};

    fn mean_field_ou() -> Arc<dyn CoefficientField> {
        Arc::new(assemble_exa(ExaKernels::mean_field_ou(1)).unwrap())
    }

    fn dirac_flow(c: f64, times: &[f64]) -> MeasureFlow {
        MeasureFlow::constant(times.to_vec(), &EmpiricalMeasure::dirac(&[c])).unwrap()
    }

    #[test]
    fn rho_examples() {
        let times = [0.0, 0.5, 1.0];
        let opts = RhoOptions::new(PsiModulus::linear(), 1.0);
        let a = dirac_flow(0.0, &times);
        let b = dirac_flow(1.5, &times);
        assert_eq!(rho_lambda(&a, &a, 0.0, &opts).unwrap().value, 0.0);
        assert!((rho_lambda(&a, &b, 0.0, &opts).unwrap().value - 3.0).abs() < 1e-12);
        let r = rho_lambda(&a, &b, 4.0, &opts).unwrap();
        assert!((r.value - 3.0).abs() < 1e-12 && r.at_time == 0.0);
        let c = dirac_flow(0.0, &[0.0, 1.0]);
        assert!(matches!(rho_lambda(&a, &c, 0.0, &opts), Err(LabError::GridMismatch(_))));
    }

    #[test]
    fn rho_is_a_metric_on_random_flows() {
        let mut g = rng::stream(8, 0);
        let times = [0.0, 0.3, 0.7, 1.0];
        let mut random_flow = || {
            let measures = times
                .iter()
                .map(|_| {
                    let pts: Vec<f64> = (0..6).map(|_| rand::Rng::random_range(&mut g, -2.0..2.0)).collect();
                    EmpiricalMeasure::uniform(2, pts).unwrap()
                })
                .collect();
            MeasureFlow::new(times.to_vec(), measures).unwrap()
        };
        let opts = RhoOptions::new(PsiModulus::power(0.5).unwrap(), 2.0);
        for _ in 0..10 {
            let (f, g2, h) = (random_flow(), random_flow(), random_flow());
            let fg = rho_lambda(&f, &g2, 1.0, &opts).unwrap().value;
            let gf = rho_lambda(&g2, &f, 1.0, &opts).unwrap().value;
            let gh = rho_lambda(&g2, &h, 1.0, &opts).unwrap().value;
            let fh = rho_lambda(&f, &h, 1.0, &opts).unwrap().value;
            assert!((fg - gf).abs() < 1e-9);
            assert!(fh <= fg + gh + 1e-8);
            assert_eq!(rho_lambda(&f, &f, 1.0, &opts).unwrap().value, 0.0);
        }
    }

    #[test]
    fn particles_reproduce_euler_maruyama_without_interaction() {
        let f: Arc<dyn CoefficientField> = Arc::new(AffineField::ornstein_uhlenbeck(1, 1.0, 1.0).unwrap());
        let spec = DiffusionSpec::new(f, 0.0, 1.0).unwrap();
        let init = InitialLaw::measure(EmpiricalMeasure::new(1, vec![-1.0, 2.0], vec![0.4, 0.6]).unwrap());
        let opts = SimulationOptions::new(300, 40, 5).with_record_stride(8);
        let run = particle_simulate(&spec, &init, opts).unwrap();
        let ens = euler_maruyama(&spec, &init, opts).unwrap();
        assert_eq!(run.ensemble, ens);
    }

    #[test]
    fn mean_field_ou_particles() {
        let spec = DiffusionSpec::new(mean_field_ou(), 0.0, 1.0).unwrap();
        let run = particle_simulate(&spec, &InitialLaw::point(&[0.7]), SimulationOptions::new(20_000, 100, 3)).unwrap();
        for t in [0.25, 0.5, 1.0] {
            let xs = run.flow.at(t).unwrap().points().to_vec();
            assert!((mean(&xs) - 0.7).abs() < 3.0 * std_error(&xs) + 1e-12);
            let target = 1.0 - (-2.0 * t).exp();
            assert!((variance(&xs) - target).abs() < 4.0 * variance_std_error(&xs) + 0.01 * target);
        }
    }

    #[test]
    fn phi_map_is_deterministic_and_freezes_the_flow() {
        let spec = DiffusionSpec::new(mean_field_ou(), 0.0, 1.0).unwrap();
        let gamma = EmpiricalMeasure::uniform(1, vec![0.5; 2000]).unwrap();
        let input = Arc::new(MeasureFlow::constant(spec.grid(50), &EmpiricalMeasure::dirac(&[0.5])).unwrap());
        assert!(phi_map(&spec, &input, &EmpiricalMeasure::dirac(&[0.4]), 2000, 50, 1).is_err());
        let a = phi_map(&spec, &input, &gamma, 2000, 50, 1).unwrap();
        let b = phi_map(&spec, &input, &gamma, 2000, 50, 1).unwrap();
        assert_eq!(a, b);
        let xs = a.at(1.0).unwrap().points().to_vec();
        assert!((mean(&xs) - 0.5).abs() < 4.0 * std_error(&xs));
        assert!(phi_map(&spec, &input, &gamma, 2000, 40, 1).is_err());
    }

    #[test]
    fn measure_free_picard_converges_immediately() {
        let f: Arc<dyn CoefficientField> = Arc::new(AffineField::ornstein_uhlenbeck(1, 1.0, 1.0).unwrap());
        let spec = DiffusionSpec::new(f, 0.0, 1.0).unwrap();
        let opts = PicardOptions::new(10.0, 1e-2, 10, RhoOptions::new(PsiModulus::linear(), 2.0));
        let state = picard_solve(&spec, &InitialLaw::point(&[0.0]), 500, 20, 4, &opts).unwrap();
        assert!(state.converged);
        assert_eq!(state.iterations, 1);
        assert_eq!(state.history[0].rho, 0.0);
    }

    #[test]
    fn picard_writes_run_directory() {
        let dir = tempfile::tempdir().unwrap();
        let spec = DiffusionSpec::new(mean_field_ou(), 0.0, 0.5).unwrap();
        let mut opts = PicardOptions::new(10.0, 1e-2, 5, RhoOptions::new(PsiModulus::linear(), 2.0));
        opts.output_dir = Some(dir.path().to_path_buf());
        opts.lambda_sweep = vec![0.0, 5.0, 20.0];
        let init = InitialLaw::measure(EmpiricalMeasure::uniform(1, vec![-1.0, 0.0, 2.0]).unwrap());
        let state = picard_solve(&spec, &init, 1000, 20, 4, &opts).unwrap();
        assert!(state.converged);
        assert!(dir.path().join("state.json").exists());
        assert!(dir.path().join("flow_000.csv").exists());
        let text = fs::read_to_string(dir.path().join("state.json")).unwrap();
        let back: PicardState = serde_json::from_str(&text).unwrap();
        assert_eq!(back.iterations, state.iterations);
        assert_eq!(back.sweep.len(), 3);
        // larger λ discounts later times more, so it never increases ρ
        for (lo, hi) in back.sweep[0].rho.iter().zip(&back.sweep[2].rho) {
            assert!(hi <= lo);
        }
    }

    #[test]
    fn bootstrap_tolerance_shrinks_with_sample_size() {
        let mut g = rng::stream(2, 0);
        let mk = |n: usize, g: &mut rng::StreamRng| {
            let pts = (0..n).map(|_| rand::Rng::random_range(g, -1.0..1.0)).collect();
            EmpiricalMeasure::uniform(1, pts).unwrap()
        };
        let small = bootstrap_w2_tolerance(&mk(200, &mut g), 50, 0.95, 1).unwrap();
        let large = bootstrap_w2_tolerance(&mk(20_000, &mut g), 50, 0.95, 1).unwrap();
        assert!(large < small / 3.0);
    }
}
