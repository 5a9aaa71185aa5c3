//! Distances and divergences between empirical measures.
//!
//! Exact transport (`W_k` and the primal form of `W_ψ`) goes through the
//! successive-shortest-path solver. The dual form of `W_ψ`, a linear program
//! over `ψ`-Lipschitz potentials, goes through the revised simplex on the
//! merged support; the two routes share no code beyond cost evaluation.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg;
use crate::measures::{
    distance, union_support, DistanceMethod, DistanceReport, EmpiricalMeasure, TransportPlan,
};
use crate::ot::{quantile, simplex, sinkhorn, solve_transport};
use crate::psi::PsiModulus;
use crate::stats::{compensated_sum, quantile_sorted};

/// Exact LP is offered for `n·m` up to this many cells.
pub const EXACT_LP_MAX_CELLS: usize = 10_000;
/// Combined support limit for the dual `W_ψ` program.
pub const DUAL_MAX_SUPPORT: usize = 200;
/// Slack allowed when checking the smoothing bound with exact total variation.
pub const SMOOTHING_BOUND_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WkMethod {
    ExactLp,
    Quantile1d,
    /// Entropic transport; `None` selects `0.01 ×` the median cost.
    Sinkhorn { epsilon: Option<f64> },
}

fn check_pair(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<()> {
    if mu.dim() != nu.dim() {
        return Err(LabError::DimensionMismatch {
            expected: mu.dim(),
            got: nu.dim(),
        });
    }
    Ok(())
}

fn check_k(k: f64) -> Result<()> {
    if !(k >= 1.0) || !k.is_finite() {
        return Err(LabError::domain(format!("transport exponent k must be ≥ 1, got {k}")));
    }
    Ok(())
}

fn pow_k(r: f64, k: f64) -> f64 {
    if k == 1.0 {
        r
    } else if k == 2.0 {
        r * r
    } else {
        r.powf(k)
    }
}

fn cost_matrix(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, c: impl Fn(&[f64], &[f64]) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(mu.len() * nu.len());
    for (x, _) in mu.atoms() {
        for (y, _) in nu.atoms() {
            out.push(c(x, y));
        }
    }
    out
}

/// `W_k(μ, ν) = (min_π Σ π_ij |x_i − y_j|^k)^{1/k}`, `k ≥ 1`.
pub fn wasserstein_k(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, k: f64, method: WkMethod) -> Result<DistanceReport> {
    match method {
        WkMethod::ExactLp => wasserstein_k_plan(mu, nu, k).map(|(r, _)| r),
        WkMethod::Quantile1d => {
            check_pair(mu, nu)?;
            check_k(k)?;
            if mu.dim() != 1 {
                return Err(LabError::MethodInfeasible {
                    method: "quantile-1d",
                    reason: format!("dimension is {}", mu.dim()),
                });
            }
            let cost = quantile::monotone_cost(mu.points(), mu.weights(), nu.points(), nu.weights(), k);
            Ok(DistanceReport::new(format!("W_{k}"), cost.max(0.0).powf(1.0 / k), DistanceMethod::Quantile1d))
        }
        WkMethod::Sinkhorn { epsilon } => {
            check_pair(mu, nu)?;
            check_k(k)?;
            let keep = |m: &EmpiricalMeasure| -> Result<EmpiricalMeasure> {
                let idx: Vec<usize> = (0..m.len()).filter(|&i| m.weights()[i] > 0.0).collect();
                let pts = idx.iter().flat_map(|&i| m.point(i).to_vec()).collect();
                EmpiricalMeasure::new(m.dim(), pts, idx.iter().map(|&i| m.weights()[i]).collect())
            };
            let (a, b) = (keep(mu)?, keep(nu)?);
            let cost = cost_matrix(&a, &b, |x, y| pow_k(distance(x, y), k));
            let eps = match epsilon {
                Some(e) => e,
                None => {
                    let mut sorted = cost.clone();
                    sorted.sort_by(f64::total_cmp);
                    let med = quantile_sorted(&sorted, 0.5);
                    if med > 0.0 {
                        0.01 * med
                    } else {
                        0.01 * (crate::stats::mean(&cost)).max(1e-12)
                    }
                }
            };
            let sol = sinkhorn::sinkhorn(a.weights(), b.weights(), &cost, eps, 1e-6, 100_000)?;
            let mut rep = DistanceReport::new(format!("W_{k}"), sol.transport_cost.max(0.0).powf(1.0 / k), DistanceMethod::Sinkhorn);
            rep.diagnostics.iterations = Some(sol.iterations);
            rep.diagnostics.epsilon = Some(eps);
            Ok(rep)
        }
    }
}

/// Exact `W_k` together with an optimal plan.
pub fn wasserstein_k_plan(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, k: f64) -> Result<(DistanceReport, TransportPlan)> {
    check_pair(mu, nu)?;
    check_k(k)?;
    let cells = mu.len() * nu.len();
    if cells > EXACT_LP_MAX_CELLS {
        return Err(LabError::MethodInfeasible {
            method: "exact-lp",
            reason: format!("{cells} plan cells exceed {EXACT_LP_MAX_CELLS}"),
        });
    }
    let cost = cost_matrix(mu, nu, |x, y| pow_k(distance(x, y), k));
    let sol = solve_transport(mu.weights(), nu.weights(), &cost)?;
    let mut rep = DistanceReport::new(format!("W_{k}"), sol.cost.max(0.0).powf(1.0 / k), DistanceMethod::ExactLp);
    rep.diagnostics.iterations = Some(sol.augmentations);
    rep.diagnostics.duality_gap = Some(sol.duality_gap());
    let plan = TransportPlan {
        rows: mu.clone(),
        cols: nu.clone(),
        plan: sol.plan,
    };
    Ok((rep, plan))
}

/// `W_k` for large samples: the monotone coupling on the full samples in one
/// dimension, otherwise exact transport between stratified subsamples of at
/// most `subsample` atoms, averaged over `repeats` deterministic draws.
pub fn wasserstein_k_sampled(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    k: f64,
    subsample: usize,
    repeats: usize,
    seed: u64,
) -> Result<DistanceReport> {
    check_pair(mu, nu)?;
    check_k(k)?;
    if mu.dim() == 1 {
        return wasserstein_k(mu, nu, k, WkMethod::Quantile1d);
    }
    if mu.len() <= subsample && nu.len() <= subsample {
        let cost = cost_matrix(mu, nu, |x, y| pow_k(distance(x, y), k));
        let sol = solve_transport(mu.weights(), nu.weights(), &cost)?;
        return Ok(DistanceReport::new(format!("W_{k}"), sol.cost.max(0.0).powf(1.0 / k), DistanceMethod::ExactLp));
    }
    let repeats = repeats.max(1);
    let values = crate::par::try_map_indexed(repeats, |r| -> Result<f64> {
        let s = crate::rng::derive_seed(seed, r as u64);
        let a = mu.stratified_subsample(subsample, s);
        let b = nu.stratified_subsample(subsample, s);
        let cost = cost_matrix(&a, &b, |x, y| pow_k(distance(x, y), k));
        let sol = solve_transport(a.weights(), b.weights(), &cost)?;
        Ok(sol.cost.max(0.0).powf(1.0 / k))
    })?;
    let mut rep = DistanceReport::new(format!("W_{k}"), compensated_sum(values.iter().copied()) / repeats as f64, DistanceMethod::ExactLp);
    rep.diagnostics.subsample = Some(subsample);
    Ok(rep)
}

/// Ground cost of `W_ψ`: zero on the diagonal, `ψ(|x − y|)` elsewhere.
fn psi_cost(psi: &PsiModulus, x: &[f64], y: &[f64]) -> f64 {
    let r = distance(x, y);
    if r <= crate::measures::ATOM_MATCH_TOL {
        0.0
    } else {
        psi.at(r)
    }
}

/// Primal `W_ψ`: optimal transport with cost `ψ(|x − y|)·1_{x≠y}`.
pub fn w_psi_primal(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, psi: &PsiModulus) -> Result<DistanceReport> {
    check_pair(mu, nu)?;
    let cells = mu.len() * nu.len();
    if cells > EXACT_LP_MAX_CELLS {
        return Err(LabError::MethodInfeasible {
            method: "exact-lp",
            reason: format!("{cells} plan cells exceed {EXACT_LP_MAX_CELLS}"),
        });
    }
    let cost = cost_matrix(mu, nu, |x, y| psi_cost(psi, x, y));
    let sol = solve_transport(mu.weights(), nu.weights(), &cost)?;
    let mut rep = DistanceReport::new("W_psi", sol.cost, DistanceMethod::ExactLp);
    rep.diagnostics.iterations = Some(sol.augmentations);
    rep.diagnostics.duality_gap = Some(sol.duality_gap());
    Ok(rep)
}

/// Optimal potential of the dual `W_ψ` program, gauged to `f(first atom) = 0`.
#[derive(Debug, Clone)]
pub struct PsiDualSolution {
    pub report: DistanceReport,
    pub atoms: Vec<Vec<f64>>,
    pub potential: Vec<f64>,
    /// `max_{i≠j} (f_i − f_j − ψ(|x_i − x_j|))`, nonpositive up to rounding.
    pub constraint_violation: f64,
}

/// Dual `W_ψ = max Σ (μ_i − ν_i) f_i` over `|f_i − f_j| ≤ ψ(|x_i − x_j|)`.
pub fn w_psi_dual(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, psi: &PsiModulus) -> Result<DistanceReport> {
    w_psi_dual_solution(mu, nu, psi).map(|s| s.report)
}

pub fn w_psi_dual_solution(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, psi: &PsiModulus) -> Result<PsiDualSolution> {
    check_pair(mu, nu)?;
    let (atoms, wa, wb) = union_support(mu, nu);
    let n = atoms.len();
    if n > DUAL_MAX_SUPPORT {
        return Err(LabError::OversizeSupport {
            size: n,
            limit: DUAL_MAX_SUPPORT,
        });
    }
    let signed: Vec<f64> = wa.iter().zip(&wb).map(|(a, b)| a - b).collect();
    if n == 1 {
        let mut report = DistanceReport::new("W_psi", 0.0, DistanceMethod::ExactLp);
        report.diagnostics.support_size = Some(1);
        return Ok(PsiDualSolution {
            report,
            atoms,
            potential: vec![0.0],
            constraint_violation: 0.0,
        });
    }
    // The program over potentials is solved through its LP dual, a
    // transshipment problem on the complete graph of merged atoms. The
    // balance row of the last atom is redundant and dropped, which fixes
    // its potential at zero.
    let rows = n - 1;
    let mut columns = Vec::with_capacity(n * (n - 1));
    let mut cost = Vec::with_capacity(n * (n - 1));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let mut col = Vec::with_capacity(2);
            if i < rows {
                col.push((i, 1.0));
            }
            if j < rows {
                col.push((j, -1.0));
            }
            columns.push(col);
            cost.push(psi.at(distance(&atoms[i], &atoms[j])));
        }
    }
    let lp = simplex::StandardLp {
        rows,
        columns,
        cost,
        rhs: signed[..rows].to_vec(),
    };
    let sol = simplex::solve(&lp).map_err(|e| LabError::Lp(format!("W_psi dual program: {e}")))?;
    let mut f: Vec<f64> = sol.duals.clone();
    f.push(0.0);
    let gauge = f[0];
    f.iter_mut().for_each(|v| *v -= gauge);
    let value = compensated_sum(signed.iter().zip(&f).map(|(s, v)| s * v));
    let mut violation = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                violation = violation.max(f[i] - f[j] - psi.at(distance(&atoms[i], &atoms[j])));
            }
        }
    }
    let mut report = DistanceReport::new("W_psi", value, DistanceMethod::ExactLp);
    report.diagnostics.iterations = Some(sol.pivots);
    report.diagnostics.duality_gap = Some(sol.objective - value);
    report.diagnostics.support_size = Some(n);
    Ok(PsiDualSolution {
        report,
        atoms,
        potential: f,
        constraint_violation: violation,
    })
}

/// `W_ψ` between large samples via exact transport on stratified subsamples
/// (the subsample size is recorded in the report).
pub fn w_psi_sampled(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, psi: &PsiModulus, subsample: usize, seed: u64) -> Result<DistanceReport> {
    check_pair(mu, nu)?;
    let a = mu.stratified_subsample(subsample, seed);
    let b = nu.stratified_subsample(subsample, seed);
    let cost = cost_matrix(&a, &b, |x, y| psi_cost(psi, x, y));
    let sol = solve_transport(a.weights(), b.weights(), &cost)?;
    let mut rep = DistanceReport::new("W_psi", sol.cost, DistanceMethod::ExactLp);
    rep.diagnostics.subsample = Some(a.len().max(b.len()));
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TvMode {
    /// Both measures list the same atoms; anything else is an error.
    SharedSupport,
    /// Merged atoms of two discrete laws (exact for any discrete pair).
    Atomic,
    /// Shared product histogram; `None` picks Freedman–Diaconis widths.
    Histogram { bins: Option<usize> },
}

/// `‖μ − ν‖_var = sup_{|f| ≤ 1} |μ(f) − ν(f)| = Σ |μ_i − ν_i|`, at most 2.
pub fn total_variation(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, mode: TvMode) -> Result<DistanceReport> {
    check_pair(mu, nu)?;
    match mode {
        TvMode::SharedSupport | TvMode::Atomic => {
            if mode == TvMode::SharedSupport && !mu.same_support_as(nu) {
                return Err(LabError::Inconsistent("shared-support total variation on mismatched supports".into()));
            }
            let (atoms, a, b) = union_support(mu, nu);
            let v = compensated_sum(a.iter().zip(&b).map(|(x, y)| (x - y).abs()));
            let mut rep = DistanceReport::new("TV", v.min(2.0), DistanceMethod::ClosedForm);
            rep.diagnostics.support_size = Some(atoms.len());
            Ok(rep)
        }
        TvMode::Histogram { bins } => histogram_tv(mu, nu, bins),
    }
}

fn histogram_tv(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, bins: Option<usize>) -> Result<DistanceReport> {
    let d = mu.dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    let mut widths = vec![0.0; d];
    let mut counts = vec![1usize; d];
    for c in 0..d {
        let mut pooled: Vec<f64> = mu
            .atoms()
            .chain(nu.atoms())
            .map(|(x, _)| x[c])
            .collect();
        pooled.sort_by(f64::total_cmp);
        lo[c] = pooled[0];
        hi[c] = pooled[pooled.len() - 1];
        let range = hi[c] - lo[c];
        counts[c] = match bins {
            Some(b) => b.max(1),
            None => {
                let iqr = quantile_sorted(&pooled, 0.75) - quantile_sorted(&pooled, 0.25);
                let h = 2.0 * iqr * (pooled.len() as f64).powf(-1.0 / 3.0);
                if h > 0.0 && range > 0.0 {
                    ((range / h).ceil() as usize).clamp(1, 1000)
                } else {
                    1
                }
            }
        };
        widths[c] = if range > 0.0 { range / counts[c] as f64 } else { 1.0 };
    }
    let mut cells: HashMap<Vec<usize>, (f64, f64)> = HashMap::new();
    let key = |x: &[f64]| -> Vec<usize> {
        (0..d)
            .map(|c| (((x[c] - lo[c]) / widths[c]) as usize).min(counts[c] - 1))
            .collect()
    };
    for (x, w) in mu.atoms() {
        cells.entry(key(x)).or_default().0 += w;
    }
    for (x, w) in nu.atoms() {
        cells.entry(key(x)).or_default().1 += w;
    }
    let mut diffs: Vec<f64> = cells.values().map(|(a, b)| (a - b).abs()).collect();
    diffs.sort_by(f64::total_cmp);
    let v = compensated_sum(diffs);
    let mut rep = DistanceReport::new("TV", v.min(2.0), DistanceMethod::Histogram);
    rep.diagnostics.bins = Some(counts.iter().product());
    Ok(rep)
}

/// `W₂` between `N(m₁, Σ₁)` and `N(m₂, Σ₂)`.
pub fn gaussian_w2(mean1: &[f64], cov1: &DMatrix<f64>, mean2: &[f64], cov2: &DMatrix<f64>) -> Result<f64> {
    let d = mean1.len();
    if mean2.len() != d || cov1.nrows() != d || cov2.nrows() != d {
        return Err(LabError::DimensionMismatch {
            expected: d,
            got: mean2.len(),
        });
    }
    let root2 = linalg::sqrt_psd(cov2)?;
    linalg::sqrt_psd(cov1)?;
    let cross = linalg::sqrt_psd(&(&root2 * cov1 * &root2))?;
    let shift: f64 = mean1.iter().zip(mean2).map(|(a, b)| (a - b).powi(2)).sum();
    let trace = (cov1 + cov2 - cross * 2.0).trace();
    Ok((shift + trace.max(0.0)).sqrt())
}

/// `KL(N(m₀, Σ₀) ‖ N(m₁, Σ₁))`.
pub fn gaussian_kl(m0: &[f64], c0: &DMatrix<f64>, m1: &[f64], c1: &DMatrix<f64>) -> Result<f64> {
    let d = m0.len();
    let scale = c0.amax().max(c1.amax()).max(f64::MIN_POSITIVE);
    for (name, c) in [("first", c0), ("second", c1)] {
        let min = linalg::min_eigenvalue(c);
        if !(min > 1e-14 * scale) {
            return Err(LabError::domain(format!("{name} fitted Gaussian is degenerate (min eigenvalue {min:.3e})")));
        }
    }
    let chol1 = c1.clone().cholesky().ok_or_else(|| LabError::NotSpd("second covariance".into()))?;
    let chol0 = c0.clone().cholesky().ok_or_else(|| LabError::NotSpd("first covariance".into()))?;
    let inv1 = chol1.inverse();
    let diff = DVector::from_iterator(d, m1.iter().zip(m0).map(|(a, b)| a - b));
    let quad = (diff.transpose() * &inv1 * &diff)[(0, 0)];
    let trace = (&inv1 * c0).trace();
    let logdet1: f64 = 2.0 * chol1.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let logdet0: f64 = 2.0 * chol0.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(0.5 * (trace + quad - d as f64 + logdet1 - logdet0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntropyMode {
    /// k-nearest-neighbour estimator on the raw samples.
    Knn { k: usize },
    /// KL divergence between the Gaussians fitted to each sample.
    GaussianClosedForm,
}

/// Relative entropy `Ent(μ | ν) = ∫ log(dμ/dν) dμ` estimated from samples.
/// The kNN mode treats both inputs as i.i.d. samples and ignores weights.
pub fn relative_entropy(mu_samples: &EmpiricalMeasure, nu_samples: &EmpiricalMeasure, mode: EntropyMode) -> Result<f64> {
    check_pair(mu_samples, nu_samples)?;
    match mode {
        EntropyMode::GaussianClosedForm => gaussian_kl(
            &mu_samples.mean(),
            &mu_samples.covariance(),
            &nu_samples.mean(),
            &nu_samples.covariance(),
        ),
        EntropyMode::Knn { k } => knn_kl(mu_samples, nu_samples, k),
    }
}

/// Wang–Kulkarni–Verdú estimator
/// `(d/n) Σ log(ν_k(i)/ρ_k(i)) + log(m/(n−1))`.
fn knn_kl(x: &EmpiricalMeasure, y: &EmpiricalMeasure, k: usize) -> Result<f64> {
    let (n, m, d) = (x.len(), y.len(), x.dim());
    if k == 0 || n < k + 1 || m < k {
        return Err(LabError::domain(format!(
            "kNN entropy with k = {k} needs at least k+1 samples of each law (got {n} and {m})"
        )));
    }
    let logs: Vec<Result<f64>> = if d == 1 {
        let mut sx = x.points().to_vec();
        let mut sy = y.points().to_vec();
        sx.sort_by(f64::total_cmp);
        sy.sort_by(f64::total_cmp);
        crate::par::map_indexed(n, |i| {
            let q = x.points()[i];
            let rho = kth_gap_sorted(&sx, q, k, true);
            let nu = kth_gap_sorted(&sy, q, k, false);
            ratio_log(rho, nu)
        })
    } else {
        crate::par::map_indexed(n, |i| {
            let q = x.point(i);
            let mut own: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| distance(q, x.point(j))).collect();
            let mut other: Vec<f64> = (0..m).map(|j| distance(q, y.point(j))).collect();
            let rho = *own.select_nth_unstable_by(k - 1, f64::total_cmp).1;
            let nu = *other.select_nth_unstable_by(k - 1, f64::total_cmp).1;
            ratio_log(rho, nu)
        })
    };
    let logs: Vec<f64> = logs.into_iter().collect::<Result<_>>()?;
    Ok(d as f64 * compensated_sum(logs) / n as f64 + (m as f64 / (n as f64 - 1.0)).ln())
}

fn ratio_log(rho: f64, nu: f64) -> Result<f64> {
    if !(rho > 0.0) || !(nu > 0.0) {
        return Err(LabError::domain("kNN entropy hit a zero neighbour distance (duplicate samples)"));
    }
    Ok((nu / rho).ln())
}

/// Distance from `q` to its k-th nearest element of the sorted slice; with
/// `skip_self` one element equal to `q` is excluded.
fn kth_gap_sorted(sorted: &[f64], q: f64, k: usize, skip_self: bool) -> f64 {
    let pos = sorted.partition_point(|v| *v < q);
    let mut left = pos as isize - 1;
    let mut right = pos;
    let mut skipped = !skip_self;
    let mut taken = 0;
    let mut last = 0.0;
    while taken < k {
        let dl = if left >= 0 { q - sorted[left as usize] } else { f64::INFINITY };
        let dr = if right < sorted.len() { sorted[right] - q } else { f64::INFINITY };
        let gap = if dr <= dl {
            right += 1;
            dr
        } else {
            left -= 1;
            dl
        };
        if !skipped && gap == 0.0 {
            skipped = true;
            continue;
        }
        last = gap;
        taken += 1;
    }
    last
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmoothingRule {
    MonteCarlo { samples: usize, seed: u64 },
    /// Tensorised Gauss–Hermite with `nodes` points per axis (`d ≤ 3`).
    GaussHermite { nodes: usize },
}

/// Heat smoothing `f_t(x) = E[f(x + B_t)]`, `B_t ~ N(0, t·I)`.
pub fn heat_smooth(f: &(dyn Fn(&[f64]) -> f64 + Sync), t: f64, x: &[f64], rule: SmoothingRule) -> Result<f64> {
    if !(t > 0.0) {
        return Err(LabError::domain(format!("smoothing time must be positive, got {t}")));
    }
    let d = x.len();
    let sd = t.sqrt();
    match rule {
        SmoothingRule::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(LabError::domain("Monte Carlo smoothing needs samples"));
            }
            let vals = crate::par::map_indexed(samples, |s| {
                let mut g = crate::rng::stream(seed, s as u64);
                let y: Vec<f64> = x
                    .iter()
                    .map(|xi| xi + sd * { let z: f64 = StandardNormal.sample(&mut g); z })
                    .collect();
                f(&y)
            });
            Ok(compensated_sum(vals) / samples as f64)
        }
        SmoothingRule::GaussHermite { nodes } => {
            if d > 3 {
                return Err(LabError::MethodInfeasible {
                    method: "gauss-hermite",
                    reason: format!("dimension {d} > 3"),
                });
            }
            let (z, w) = gauss_hermite_normal(nodes)?;
            let total = z.len().pow(d as u32);
            let mut acc = Vec::with_capacity(total);
            let mut y = vec![0.0; d];
            for flat in 0..total {
                let mut rem = flat;
                let mut weight = 1.0;
                for c in 0..d {
                    let idx = rem % z.len();
                    rem /= z.len();
                    y[c] = x[c] + sd * z[idx];
                    weight *= w[idx];
                }
                acc.push(weight * f(&y));
            }
            Ok(compensated_sum(acc))
        }
    }
}

/// Nodes and weights for `E[g(Z)]`, `Z ~ N(0, 1)` (Golub–Welsch).
pub fn gauss_hermite_normal(nodes: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if nodes == 0 || nodes > 100 {
        return Err(LabError::domain(format!("Gauss–Hermite node count {nodes} outside 1..=100")));
    }
    let jacobi = DMatrix::from_fn(nodes, nodes, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..nodes)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    Ok(pairs.into_iter().map(|(z, w)| (z, w / total)).unzip())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmoothingBound {
    pub t_grid: Vec<f64>,
    pub rhs: Vec<f64>,
    pub min_rhs: f64,
    pub argmin_t: f64,
    pub lhs: f64,
    pub total_variation: f64,
    pub w1: f64,
    pub tv_exact: bool,
}

/// Compares `W_ψ(μ, ν)` with `√d ψ(√t)‖μ − ν‖_var + d ψ(√t)/√t · W₁(μ, ν)`
/// along `t_grid`. With exact total variation a violation beyond
/// [`SMOOTHING_BOUND_SLACK`] is reported as an error.
pub fn smoothing_bound(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, psi: &PsiModulus, t_grid: &[f64], tv_mode: TvMode) -> Result<SmoothingBound> {
    check_pair(mu, nu)?;
    if t_grid.is_empty() || t_grid.iter().any(|t| !(*t > 0.0)) {
        return Err(LabError::domain("t grid must be nonempty and positive"));
    }
    let lhs = w_psi_dual(mu, nu, psi)?.value;
    let tv = total_variation(mu, nu, tv_mode)?.value;
    let tv_exact = !matches!(tv_mode, TvMode::Histogram { .. });
    let w1 = if mu.len() * nu.len() <= EXACT_LP_MAX_CELLS {
        wasserstein_k(mu, nu, 1.0, WkMethod::ExactLp)?.value
    } else {
        wasserstein_k_sampled(mu, nu, 1.0, 100, 5, 0)?.value
    };
    let d = mu.dim() as f64;
    let rhs: Vec<f64> = t_grid
        .iter()
        .map(|&t| {
            let p = psi.at(t.sqrt());
            d.sqrt() * p * tv + d * p / t.sqrt() * w1
        })
        .collect();
    let (idx, &min_rhs) = rhs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty grid");
    if tv_exact && lhs > min_rhs + SMOOTHING_BOUND_SLACK {
        return Err(LabError::Inconsistent(format!(
            "W_psi = {lhs} exceeds the smoothing bound {min_rhs} at t = {}",
            t_grid[idx]
        )));
    }
    Ok(SmoothingBound {
        t_grid: t_grid.to_vec(),
        rhs,
        min_rhs,
        argmin_t: t_grid[idx],
        lhs,
        total_variation: tv,
        w1,
        tv_exact,
    })
}
