//! Measure-dependent coefficient fields `(b, a)` and numeric checks of the
//! structural assumptions placed on them.
//!
//! A field evaluates `b(t, x, μ)` through its two declared parts
//! `b⁽⁰⁾ + b⁽¹⁾` and the diffusion matrix `a(t, x, μ)`; the noise coefficient
//! used by the simulators is always `σ = √(2a)`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distances::{w_psi_primal, wasserstein_k, WkMethod};
use crate::error::{LabError, Result};
use crate::linalg;
use crate::measures::{norm, EmpiricalMeasure};
use crate::psi::PsiModulus;

/// Time-dependent rate `ρ_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeRate {
    Constant { value: f64 },
    /// `scale · t^{−exponent}`.
    Power { scale: f64, exponent: f64 },
}

impl TimeRate {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            TimeRate::Constant { value } => value,
            TimeRate::Power { scale, exponent } => scale * t.max(f64::MIN_POSITIVE).powf(-exponent),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldMeta {
    /// Hölder exponent of `a` in `x`.
    pub alpha: f64,
    /// Measure-Lipschitz constant of `a`.
    #[serde(rename = "K")]
    pub lipschitz: f64,
    pub rho: TimeRate,
    pub psi: PsiModulus,
    /// Moment index of the state space `𝒫_k`.
    pub k: f64,
}

impl FieldMeta {
    pub fn lipschitz(lipschitz: f64, psi: PsiModulus) -> Self {
        Self {
            alpha: 1.0,
            lipschitz,
            rho: TimeRate::Constant { value: lipschitz },
            psi,
            k: 2.0,
        }
    }
}

/// Coefficients with the time and law arguments fixed.
pub trait FrozenField: Send + Sync {
    fn dim(&self) -> usize;
    fn drift(&self, x: &[f64], out: &mut [f64]);
    /// Row-major `d×d` diffusion matrix `a`.
    fn diffusion(&self, x: &[f64], out: &mut [f64]);
}

/// Coefficients `b(t, x, μ)`, `a(t, x, μ)`.
///
/// Evaluation must be re-entrant: one field is shared by every particle.
/// Fields that depend on the law panic when called without a measure.
pub trait CoefficientField: Send + Sync {
    fn dim(&self) -> usize;
    fn meta(&self) -> &FieldMeta;
    fn is_measure_dependent(&self) -> bool;
    /// Whether the drift blows up as `t ↓ 0`; simulators then evaluate at step midpoints.
    fn time_singular(&self) -> bool {
        false
    }
    fn drift_parts(&self, t: f64, x: &[f64], mu: Option<&EmpiricalMeasure>, b0: &mut [f64], b1: &mut [f64]);
    fn drift(&self, t: f64, x: &[f64], mu: Option<&EmpiricalMeasure>, out: &mut [f64]);
    fn diffusion(&self, t: f64, x: &[f64], mu: Option<&EmpiricalMeasure>, out: &mut [f64]);
    fn describe(&self) -> String;

    /// Freezes `(t, μ)`. Fields whose law dependence is through a few
    /// integrals override this to precompute them once per step.
    fn bind<'a>(&'a self, t: f64, mu: Option<&'a EmpiricalMeasure>) -> Box<dyn FrozenField + 'a> {
        Box::new(Bound { field: self, t, mu })
    }
}

struct Bound<'a, F: ?Sized> {
    field: &'a F,
    t: f64,
    mu: Option<&'a EmpiricalMeasure>,
}

impl<F: CoefficientField + ?Sized> FrozenField for Bound<'_, F> {
    fn dim(&self) -> usize {
        self.field.dim()
    }
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        self.field.drift(self.t, x, self.mu, out)
    }
    fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        self.field.diffusion(self.t, x, self.mu, out)
    }
}

fn check_square(name: &str, m: &[f64], d: usize) -> Result<()> {
    if m.len() != d * d {
        return Err(LabError::DimensionMismatch {
            expected: d * d,
            got: m.len(),
        })
        .map_err(|e| LabError::Config(format!("{name}: {e}")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(LabError::domain(format!("{name} has non-finite entries")));
    }
    Ok(())
}

fn check_vector(name: &str, v: &[f64], d: usize) -> Result<()> {
    if v.len() != d {
        return Err(LabError::Config(format!("{name}: expected {d} entries, got {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(LabError::domain(format!("{name} has non-finite entries")));
    }
    Ok(())
}

fn check_spd(name: &str, a: &[f64], d: usize) -> Result<()> {
    let m = DMatrix::from_row_slice(d, d, a);
    linalg::sqrt_spd(&m).map_err(|e| LabError::NotSpd(format!("{name}: {e}")))?;
    Ok(())
}

fn identity(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    m
}

fn mat_vec_add(m: &[f64], x: &[f64], out: &mut [f64]) {
    let d = x.len();
    for i in 0..d {
        let row = &m[i * d..(i + 1) * d];
        out[i] += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Measure-free affine field `b(t, x) = Ax + c·t^{−β}`, constant `a`.
///
/// With `β > 0` the offset is the singular part `b⁽⁰⁾`; otherwise `b⁽⁰⁾ = 0`.
#[derive(Debug, Clone)]
pub struct AffineField {
    dim: usize,
    drift_matrix: Vec<f64>,
    drift_offset: Vec<f64>,
    offset_time_exponent: f64,
    diffusion: Vec<f64>,
    meta: FieldMeta,
}

impl AffineField {
    pub fn new(dim: usize, drift_matrix: Vec<f64>, drift_offset: Vec<f64>, diffusion: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(LabError::domain("field dimension must be positive"));
        }
        check_square("drift_matrix", &drift_matrix, dim)?;
        check_vector("drift_offset", &drift_offset, dim)?;
        check_square("diffusion", &diffusion, dim)?;
        check_spd("diffusion", &diffusion, dim)?;
        Ok(Self {
            dim,
            drift_matrix,
            drift_offset,
            offset_time_exponent: 0.0,
            diffusion,
            meta: FieldMeta::lipschitz(0.0, PsiModulus::linear()),
        })
    }

    /// `b = −θx`, `a = scale·I`.
    pub fn ornstein_uhlenbeck(dim: usize, theta: f64, scale: f64) -> Result<Self> {
        let mut m = identity(dim);
        m.iter_mut().for_each(|v| *v *= -theta);
        let mut a = identity(dim);
        a.iter_mut().for_each(|v| *v *= scale);
        Self::new(dim, m, vec![0.0; dim], a)
    }

    /// Multiplies the offset by `t^{−β}`, `0 ≤ β < 1`.
    pub fn with_offset_time_exponent(mut self, beta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(LabError::domain(format!("offset time exponent must lie in [0, 1), got {beta}")));
        }
        self.offset_time_exponent = beta;
        Ok(self)
    }

    pub fn diffusion_matrix(&self) -> &[f64] {
        &self.diffusion
    }

    fn offset_scale(&self, t: f64) -> f64 {
        if self.offset_time_exponent == 0.0 {
            1.0
        } else {
            t.max(f64::MIN_POSITIVE).powf(-self.offset_time_exponent)
        }
    }
}

impl CoefficientField for AffineField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn meta(&self) -> &FieldMeta {
        &self.meta
    }
    fn is_measure_dependent(&self) -> bool {
        false
    }
    fn time_singular(&self) -> bool {
        self.offset_time_exponent > 0.0
    }
    fn drift_parts(&self, t: f64, x: &[f64], _mu: Option<&EmpiricalMeasure>, b0: &mut [f64], b1: &mut [f64]) {
        b1.fill(0.0);
        mat_vec_add(&self.drift_matrix, x, b1);
        if self.time_singular() {
            let s = self.offset_scale(t);
            for (o, c) in b0.iter_mut().zip(&self.drift_offset) {
                *o = c * s;
            }
        } else {
            b0.fill(0.0);
            for (o, c) in b1.iter_mut().zip(&self.drift_offset) {
                *o += c;
            }
        }
    }
    fn drift(&self, t: f64, x: &[f64], _mu: Option<&EmpiricalMeasure>, out: &mut [f64]) {
        let s = self.offset_scale(t);
        for (o, c) in out.iter_mut().zip(&self.drift_offset) {
            *o = c * s;
        }
        mat_vec_add(&self.drift_matrix, x, out);
    }
    fn diffusion(&self, _t: f64, _x: &[f64], _mu: Option<&EmpiricalMeasure>, out: &mut [f64]) {
        out.copy_from_slice(&self.diffusion);
    }
    fn describe(&self) -> String {
        format!("affine field in dimension {}", self.dim)
    }
}

/// Affine part `Ax + c` of the measure-free drift `b⁽⁰⁾`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineDrift {
    /// Row-major `d×d`; omitted means zero.
    #[serde(default)]
    pub matrix: Option<Vec<f64>>,
    #[serde(default)]
    pub offset: Option<Vec<f64>>,
}

/// Interaction kernel `b̃(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InteractionKernel {
    Zero,
    /// `κ(y − x)`.
    Attraction { kappa: f64 },
    /// `scale · (sign(yᵢ) ψ(|yᵢ|))ᵢ`.
    PsiOdd { scale: f64 },
}

/// Noise kernel `σ̃(x, y)`, always a multiple of the identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKernel {
    Zero,
    /// `scale · I`.
    Constant { scale: f64 },
    /// `scale · min(ψ(|y|), 1) · I`.
    PsiBounded { scale: f64 },
}

/// Kernels of the integral-type field
/// `b = b⁽⁰⁾ + ∫ b̃(·, y) μ(dy)`, `σ = √(λI + ∫ σ̃σ̃*(·, y) μ(dy))`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExaKernels {
    pub dim: usize,
    pub lambda: f64,
    #[serde(default = "zero_drift")]
    pub b0: AffineDrift,
    pub b_tilde: InteractionKernel,
    pub sigma_tilde: NoiseKernel,
    #[serde(rename = "K")]
    pub lipschitz: f64,
    #[serde(default = "PsiModulus::linear")]
    pub psi: PsiModulus,
    #[serde(default = "default_k")]
    pub k: f64,
}

fn zero_drift() -> AffineDrift {
    AffineDrift { matrix: None, offset: None }
}

fn default_k() -> f64 {
    2.0
}

impl ExaKernels {
    /// `b(x, μ) = −x + mean(μ)`, `a = I`.
    pub fn mean_field_ou(dim: usize) -> Self {
        Self {
            dim,
            lambda: 2.0,
            b0: zero_drift(),
            b_tilde: InteractionKernel::Attraction { kappa: 1.0 },
            sigma_tilde: NoiseKernel::Zero,
            lipschitz: 1.0,
            psi: PsiModulus::linear(),
            k: 2.0,
        }
    }

    fn interaction_split(&self, y: &[f64], out: &mut [f64]) {
        match self.b_tilde {
            InteractionKernel::Zero => out.fill(0.0),
            InteractionKernel::Attraction { kappa } => {
                for (o, v) in out.iter_mut().zip(y) {
                    *o = kappa * v;
                }
            }
            InteractionKernel::PsiOdd { scale } => {
                for (o, v) in out.iter_mut().zip(y) {
                    *o = scale * v.signum() * self.psi.at(v.abs());
                }
            }
        }
    }

    fn interaction_self_rate(&self) -> f64 {
        match self.b_tilde {
            InteractionKernel::Attraction { kappa } => kappa,
            _ => 0.0,
        }
    }

    /// `b̃(x, y)`.
    pub fn b_tilde_at(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        self.interaction_split(y, out);
        let r = self.interaction_self_rate();
        for (o, v) in out.iter_mut().zip(x) {
            *o -= r * v;
        }
    }

    /// Scalar `s(y)` with `σ̃(x, y) = s(y)·I`.
    pub fn noise_scale_at(&self, y: &[f64]) -> f64 {
        match self.sigma_tilde {
            NoiseKernel::Zero => 0.0,
            NoiseKernel::Constant { scale } => scale,
            NoiseKernel::PsiBounded { scale } => scale * self.psi.at(norm(y)).min(1.0),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(LabError::domain("field dimension must be positive"));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(LabError::domain(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.lipschitz >= 0.0) {
            return Err(LabError::domain("K must be nonnegative"));
        }
        if let Some(m) = &self.b0.matrix {
            check_square("b0.matrix", m, self.dim)?;
        }
        if let Some(c) = &self.b0.offset {
            check_vector("b0.offset", c, self.dim)?;
        }
        let finite = match self.b_tilde {
            InteractionKernel::Zero => true,
            InteractionKernel::Attraction { kappa } => kappa.is_finite(),
            InteractionKernel::PsiOdd { scale } => scale.is_finite(),
        } && match self.sigma_tilde {
            NoiseKernel::Zero => true,
            NoiseKernel::Constant { scale } | NoiseKernel::PsiBounded { scale } => scale.is_finite(),
        };
        if !finite {
            return Err(LabError::domain("non-finite kernel parameter"));
        }
        self.psi.clone().validated()?;
        Ok(())
    }

    /// Spot-checks `|b̃(x,y) − b̃(x̃,ỹ)| ≤ K(|x − x̃| + ψ(|y − ỹ|))` on random quadruples.
    pub fn check_kernel_lipschitz(&self, samples: usize, radius: f64, seed: u64) -> AssumptionReport {
        let d = self.dim;
        let mut g = crate::rng::stream(seed, 0);
        let mut worst: f64 = 0.0;
        let mut skipped = 0;
        let (mut b1, mut b2) = (vec![0.0; d], vec![0.0; d]);
        for _ in 0..samples {
            let mut draw = || -> Vec<f64> { (0..d).map(|_| g.random_range(-radius..radius)).collect() };
            let (x, xt, y, yt) = (draw(), draw(), draw(), draw());
            let denom = crate::measures::distance(&x, &xt) + self.psi.at(crate::measures::distance(&y, &yt));
            if denom <= 0.0 {
                skipped += 1;
                continue;
            }
            self.b_tilde_at(&x, &y, &mut b1);
            self.b_tilde_at(&xt, &yt, &mut b2);
            worst = worst.max(crate::measures::distance(&b1, &b2) / denom);
        }
        AssumptionReport {
            predicate: "kernel-lipschitz".into(),
            pass: worst <= self.lipschitz + 1e-8,
            measured_constant: worst,
            declared_constant: Some(self.lipschitz),
            sample_description: format!("{samples} random quadruples in [-{radius}, {radius}]^{d}"),
            skipped,
        }
    }
}

/// Field assembled from [`ExaKernels`].
#[derive(Debug, Clone)]
pub struct ExaField {
    kernels: ExaKernels,
    b0_matrix: Option<Vec<f64>>,
    b0_offset: Vec<f64>,
    meta: FieldMeta,
}

/// Builds the integral-type field; the integral part of the drift is `b⁽¹⁾`.
pub fn assemble_exa(kernels: ExaKernels) -> Result<ExaField> {
    kernels.validate()?;
    let d = kernels.dim;
    let meta = FieldMeta {
        alpha: 1.0,
        lipschitz: kernels.lipschitz,
        rho: TimeRate::Constant { value: kernels.lipschitz },
        psi: kernels.psi.clone(),
        k: kernels.k,
    };
    Ok(ExaField {
        b0_matrix: kernels.b0.matrix.clone(),
        b0_offset: kernels.b0.offset.clone().unwrap_or_else(|| vec![0.0; d]),
        kernels,
        meta,
    })
}

/// The law enters only through `∫ g dμ` and `∫ s² dμ`.
struct ExaIntegrals {
    interaction_mean: Vec<f64>,
    noise_second_moment: f64,
}

impl ExaField {
    pub fn kernels(&self) -> &ExaKernels {
        &self.kernels
    }

    fn integrals(&self, mu: Option<&EmpiricalMeasure>) -> ExaIntegrals {
        let d = self.kernels.dim;
        let mut interaction_mean = vec![0.0; d];
        let mut noise_second_moment = 0.0;
        let needs_mu = self.is_measure_dependent() || !matches!(self.kernels.sigma_tilde, NoiseKernel::Zero);
        match mu {
            Some(mu) => {
                let mut g = vec![0.0; d];
                for (y, w) in mu.atoms() {
                    self.kernels.interaction_split(y, &mut g);
                    for (m, v) in interaction_mean.iter_mut().zip(&g) {
                        *m += w * v;
                    }
                    noise_second_moment += w * self.kernels.noise_scale_at(y).powi(2);
                }
            }
            None if needs_mu => match self.kernels.sigma_tilde {
                NoiseKernel::Constant { scale } if !self.is_measure_dependent() => noise_second_moment = scale * scale,
                _ => panic!("{} needs a measure argument", self.describe()),
            },
            None => {}
        }
        ExaIntegrals {
            interaction_mean,
            noise_second_moment,
        }
    }

    fn b0_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.b0_offset);
        if let Some(m) = &self.b0_matrix {
            mat_vec_add(m, x, out);
        }
    }

    fn b1_into(&self, x: &[f64], integrals: &ExaIntegrals, out: &mut [f64]) {
        let r = self.kernels.interaction_self_rate();
        for ((o, m), v) in out.iter_mut().zip(&integrals.interaction_mean).zip(x) {
            *o = m - r * v;
        }
    }

    fn diffusion_into(&self, integrals: &ExaIntegrals, out: &mut [f64]) {
        let d = self.kernels.dim;
        out.fill(0.0);
        let v = 0.5 * (self.kernels.lambda + integrals.noise_second_moment);
        for i in 0..d {
            out[i * d + i] = v;
        }
    }
}

impl CoefficientField for ExaField {
    fn dim(&self) -> usize {
        self.kernels.dim
    }
    fn meta(&self) -> &FieldMeta {
        &self.meta
    }
    fn is_measure_dependent(&self) -> bool {
        !matches!(self.kernels.b_tilde, InteractionKernel::Zero)
            || matches!(self.kernels.sigma_tilde, NoiseKernel::PsiBounded { .. })
    }
    fn drift_parts(&self, _t: f64, x: &[f64], mu: Option<&EmpiricalMeasure>, b0: &mut [f64], b1: &mut [f64]) {
        let integrals = self.integrals(mu);
        self.b0_into(x, b0);
        self.b1_into(x, &integrals, b1);
    }
    fn drift(&self, _t: f64, x: &[f64], mu: Option<&EmpiricalMeasure>, out: &mut [f64]) {
        let integrals = self.integrals(mu);
        self.b1_into(x, &integrals, out);
        for (o, c) in out.iter_mut().zip(&self.b0_offset) {
            *o += c;
        }
        if let Some(m) = &self.b0_matrix {
            mat_vec_add(m, x, out);
        }
    }
    fn diffusion(&self, _t: f64, _x: &[f64], mu: Option<&EmpiricalMeasure>, out: &mut [f64]) {
        let integrals = self.integrals(mu);
        self.diffusion_into(&integrals, out);
    }
    fn describe(&self) -> String {
        format!(
            "integral-kernel field in dimension {} (lambda {}, interaction {:?}, noise {:?})",
            self.kernels.dim, self.kernels.lambda, self.kernels.b_tilde, self.kernels.sigma_tilde
        )
    }
    fn bind<'a>(&'a self, _t: f64, mu: Option<&'a EmpiricalMeasure>) -> Box<dyn FrozenField + 'a> {
        let integrals = self.integrals(mu);
        let mut a = vec![0.0; self.kernels.dim * self.kernels.dim];
        self.diffusion_into(&integrals, &mut a);
        Box::new(BoundExa {
            field: self,
            integrals,
            a,
        })
    }
}

struct BoundExa<'a> {
    field: &'a ExaField,
    integrals: ExaIntegrals,
    a: Vec<f64>,
}

impl FrozenField for BoundExa<'_> {
    fn dim(&self) -> usize {
        self.field.kernels.dim
    }
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        self.field.b1_into(x, &self.integrals, out);
        for (o, c) in out.iter_mut().zip(&self.field.b0_offset) {
            *o += c;
        }
        if let Some(m) = &self.field.b0_matrix {
            mat_vec_add(m, x, out);
        }
    }
    fn diffusion(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.a);
    }
}

/// `b + εu`, `a + εS` for a constant vector `u` and symmetric matrix `S`.
#[derive(Clone)]
pub struct PerturbedField {
    base: Arc<dyn CoefficientField>,
    epsilon: f64,
    drift_direction: Vec<f64>,
    diffusion_direction: Vec<f64>,
}

impl PerturbedField {
    pub fn new(base: Arc<dyn CoefficientField>, epsilon: f64, drift_direction: Vec<f64>, diffusion_direction: Vec<f64>) -> Result<Self> {
        let d = base.dim();
        check_vector("drift direction", &drift_direction, d)?;
        check_square("diffusion direction", &diffusion_direction, d)?;
        for i in 0..d {
            for j in 0..i {
                if (diffusion_direction[i * d + j] - diffusion_direction[j * d + i]).abs() > linalg::SYMMETRY_TOL {
                    return Err(LabError::domain("diffusion direction must be symmetric"));
                }
            }
        }
        Ok(Self {
            base,
            epsilon,
            drift_direction,
            diffusion_direction,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `sup |u|`; the drift gap is `ε` times this.
    pub fn drift_gap_norm(&self) -> f64 {
        norm(&self.drift_direction)
    }

    /// Operator norm of `S`.
    pub fn diffusion_gap_norm(&self) -> f64 {
        let d = self.base.dim();
        linalg::symmetric_operator_norm(&DMatrix::from_row_slice(d, d, &self.diffusion_direction))
    }

    /// Whether `a + εS` stays positive definite at the given `(t, x)`; the
    /// law argument is `δ_x` for measure-dependent bases.
    pub fn diffusion_spd_at(&self, points: &[(f64, Vec<f64>)]) -> bool {
        let d = self.base.dim();
        let mut a = vec![0.0; d * d];
        points.iter().all(|(t, x)| {
            let delta = EmpiricalMeasure::dirac(x);
            self.diffusion(*t, x, Some(&delta), &mut a);
            linalg::min_eigenvalue(&DMatrix::from_row_slice(d, d, &a)) > linalg::MIN_EIGENVALUE
        })
    }

    fn shift_drift(&self, out: &mut [f64]) {
        for (o, u) in out.iter_mut().zip(&self.drift_direction) {
            *o += self.epsilon * u;
        }
    }

    fn shift_diffusion(&self, out: &mut [f64]) {
        for (o, s) in out.iter_mut().zip(&self.diffusion_direction) {
            *o += self.epsilon * s;
        }
    }
}

impl CoefficientField for PerturbedField {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn meta(&self) -> &FieldMeta {
        self.base.meta()
    }
    fn is_measure_dependent(&self) -> bool {
        self.base.is_measure_dependent()
    }
    fn time_singular(&self) -> bool {
        self.base.time_singular()
    }
    fn drift_parts(&self, t: f64, x: &[f64], mu: Option<&EmpiricalMeasure>, b0: &mut [f64], b1: &mut [f64]) {
        self.base.drift_parts(t, x, mu, b0, b1);
        self.shift_drift(b1);
    }
    fn drift(&self, t: f64, x: &[f64], mu: Option<&EmpiricalMeasure>, out: &mut [f64]) {
        self.base.drift(t, x, mu, out);
        self.shift_drift(out);
    }
    fn diffusion(&self, t: f64, x: &[f64], mu: Option<&EmpiricalMeasure>, out: &mut [f64]) {
        self.base.diffusion(t, x, mu, out);
        self.shift_diffusion(out);
    }
    fn describe(&self) -> String {
        format!("{} perturbed with epsilon {}", self.base.describe(), self.epsilon)
    }
    fn bind<'a>(&'a self, t: f64, mu: Option<&'a EmpiricalMeasure>) -> Box<dyn FrozenField + 'a> {
        Box::new(BoundPerturbed {
            field: self,
            inner: self.base.bind(t, mu),
        })
    }
}

struct BoundPerturbed<'a> {
    field: &'a PerturbedField,
    inner: Box<dyn FrozenField + 'a>,
}

impl FrozenField for BoundPerturbed<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        self.inner.drift(x, out);
        self.field.shift_drift(out);
    }
    fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        self.inner.diffusion(x, out);
        self.field.shift_diffusion(out);
    }
}

/// JSON description of a built-in field.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum FieldSpec {
    Frozen(AffineSpec),
    MeanFieldOu { dim: usize },
    ExaKernels(ExaKernels),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineSpec {
    pub dim: usize,
    /// Row-major `d×d`; omitted means zero.
    #[serde(default)]
    pub drift_matrix: Option<Vec<f64>>,
    #[serde(default)]
    pub drift_offset: Option<Vec<f64>>,
    #[serde(default)]
    pub offset_time_exponent: f64,
    /// Row-major `d×d`; omitted means the identity.
    #[serde(default)]
    pub diffusion: Option<Vec<f64>>,
}

impl FieldSpec {
    pub fn dim(&self) -> usize {
        match self {
            FieldSpec::Frozen(s) => s.dim,
            FieldSpec::MeanFieldOu { dim } => *dim,
            FieldSpec::ExaKernels(k) => k.dim,
        }
    }

    pub fn build(&self) -> Result<Arc<dyn CoefficientField>> {
        Ok(match self {
            FieldSpec::Frozen(s) => {
                let d = s.dim;
                if d == 0 {
                    return Err(LabError::domain("field dimension must be positive"));
                }
                let f = AffineField::new(
                    d,
                    s.drift_matrix.clone().unwrap_or_else(|| vec![0.0; d * d]),
                    s.drift_offset.clone().unwrap_or_else(|| vec![0.0; d]),
                    s.diffusion.clone().unwrap_or_else(|| identity(d)),
                )?
                .with_offset_time_exponent(s.offset_time_exponent)?;
                Arc::new(f)
            }
            FieldSpec::MeanFieldOu { dim } => Arc::new(assemble_exa(ExaKernels::mean_field_ou(*dim))?),
            FieldSpec::ExaKernels(k) => Arc::new(assemble_exa(k.clone())?),
        })
    }
}

/// `(p, q) ∈ 𝒦`: `p, q > 2` and `d/p + 2/q < 1`.
pub fn scr_k_membership(p: f64, q: f64, d: usize) -> bool {
    p > 2.0 && q > 2.0 && d as f64 / p + 2.0 / q < 1.0
}

fn m0_admissible(m: f64, p: f64, q: f64, d: usize) -> bool {
    (m - 1.0) * p / m > 1.0 && (m - 1.0) * q / m > 1.0 && d as f64 * m / (p * (m - 1.0)) + 2.0 * m / (q * (m - 1.0)) < 2.0
}

/// `max(p/(p−1), q/(q−1), 2/(2−s))` with `s = d/p + 2/q`.
pub fn m0_closed_form(p: f64, q: f64, d: usize) -> f64 {
    let s = d as f64 / p + 2.0 / q;
    (p / (p - 1.0)).max(q / (q - 1.0)).max(2.0 / (2.0 - s))
}

/// Infimum of admissible `m` located by bisection on `(1, 2]`.
pub fn m0_bisection(p: f64, q: f64, d: usize) -> f64 {
    let (mut lo, mut hi) = (1.0, 2.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if m0_admissible(mid, p, q, d) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Critical exponent `m₀ ∈ (1, 2)` for `(p₀, q₀) ∈ 𝒦`; the closed form and
/// the bisection scan must agree to `10⁻⁹`.
pub fn compute_m0(p0: f64, q0: f64, d: usize) -> Result<f64> {
    if !scr_k_membership(p0, q0, d) {
        return Err(LabError::domain(format!("({p0}, {q0}) with d = {d} is not in the admissible class")));
    }
    let closed = m0_closed_form(p0, q0, d);
    let scan = m0_bisection(p0, q0, d);
    if (closed - scan).abs() > 1e-9 {
        return Err(LabError::Inconsistent(format!("m0 closed form {closed} vs bisection {scan}")));
    }
    Ok(closed)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LpqGrid {
    /// Midpoint cells per axis of the cube around each unit ball.
    pub ball_cells_per_axis: usize,
    /// Trapezoid nodes in time.
    pub time_nodes: usize,
}

impl LpqGrid {
    pub fn default_for(dim: usize) -> Self {
        let ball_cells_per_axis = match dim {
            1 => 400,
            2 => 160,
            3 => 48,
            _ => 12,
        };
        Self {
            ball_cells_per_axis,
            time_nodes: 65,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpqEstimate {
    pub value: f64,
    pub best_center: Vec<f64>,
    pub ball_cells: usize,
    pub time_nodes: usize,
}

/// Approximates `sup_z (∫_s^t ‖1_{B(z,1)} f_r‖_{L^p}^q dr)^{1/q}` over `centers`.
pub fn tilde_lpq_norm(
    f: &(dyn Fn(f64, &[f64]) -> f64 + Sync),
    p: f64,
    q: f64,
    s: f64,
    t: f64,
    grid: LpqGrid,
    centers: &[Vec<f64>],
) -> Result<LpqEstimate> {
    if !(p >= 1.0 && p.is_finite() && q >= 1.0 && q.is_finite()) {
        return Err(LabError::domain(format!("(p, q) = ({p}, {q}) must be finite and ≥ 1")));
    }
    if !(t > s) || centers.is_empty() || grid.ball_cells_per_axis == 0 || grid.time_nodes < 2 {
        return Err(LabError::domain("empty time interval or grid"));
    }
    let d = centers[0].len();
    if centers.iter().any(|c| c.len() != d) {
        return Err(LabError::domain("centers have mixed dimensions"));
    }
    let n = grid.ball_cells_per_axis;
    let h = 2.0 / n as f64;
    let cell_volume = h.powi(d as i32);
    let mut offsets: Vec<Vec<f64>> = Vec::new();
    for flat in 0..n.pow(d as u32) {
        let mut rem = flat;
        let u: Vec<f64> = (0..d)
            .map(|_| {
                let i = rem % n;
                rem /= n;
                -1.0 + (i as f64 + 0.5) * h
            })
            .collect();
        if norm(&u) <= 1.0 {
            offsets.push(u);
        }
    }
    let times: Vec<f64> = (0..grid.time_nodes)
        .map(|i| s + (t - s) * i as f64 / (grid.time_nodes - 1) as f64)
        .collect();
    let dt = (t - s) / (grid.time_nodes - 1) as f64;
    let per_center = crate::par::map_slice(centers, |z| {
        let mut x = vec![0.0; d];
        let mut integral = 0.0;
        for (i, &r) in times.iter().enumerate() {
            let mut lp = 0.0;
            for u in &offsets {
                for c in 0..d {
                    x[c] = z[c] + u[c];
                }
                lp += f(r, &x).abs().powf(p);
            }
            let inner = (lp * cell_volume).powf(1.0 / p);
            let w = if i == 0 || i + 1 == times.len() { 0.5 } else { 1.0 };
            integral += w * inner.powf(q) * dt;
        }
        integral.powf(1.0 / q)
    });
    let (idx, value) = per_center
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty centers");
    Ok(LpqEstimate {
        value,
        best_center: centers[idx].clone(),
        ball_cells: offsets.len(),
        time_nodes: grid.time_nodes,
    })
}

/// Default finite-difference step `10⁻⁴(1 + |x|)`.
pub fn default_fd_step(x: &[f64]) -> f64 {
    1e-4 * (1.0 + norm(x))
}

/// `(div a)ⁱ = Σⱼ ∂ⱼ aⁱʲ` by central differences; `a` writes a row-major `d×d` matrix.
pub fn divergence(a: &dyn Fn(&[f64], &mut [f64]), x: &[f64], h: Option<f64>) -> Result<Vec<f64>> {
    let d = x.len();
    let h = h.unwrap_or_else(|| default_fd_step(x));
    if !(h > 0.0) {
        return Err(LabError::domain(format!("finite-difference step must be positive, got {h}")));
    }
    let mut out = vec![0.0; d];
    let (mut plus, mut minus) = (vec![0.0; d * d], vec![0.0; d * d]);
    let mut y = x.to_vec();
    for j in 0..d {
        y[j] = x[j] + h;
        a(&y, &mut plus);
        y[j] = x[j] - h;
        a(&y, &mut minus);
        y[j] = x[j];
        for i in 0..d {
            out[i] += (plus[i * d + j] - minus[i * d + j]) / (2.0 * h);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub predicate: String,
    pub pass: bool,
    pub measured_constant: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub declared_constant: Option<f64>,
    pub sample_description: String,
    pub skipped: usize,
}

/// Random pairs of small measures for [`check_measure_lipschitz`].
pub fn random_measure_pairs(dim: usize, pairs: usize, max_atoms: usize, radius: f64, seed: u64) -> Vec<(EmpiricalMeasure, EmpiricalMeasure)> {
    let mut g = crate::rng::stream(seed, 0);
    let mut draw = || {
        let n = g.random_range(1..=max_atoms.max(1));
        let pts: Vec<f64> = (0..n * dim).map(|_| g.random_range(-radius..radius)).collect();
        let mut w: Vec<f64> = (0..n).map(|_| g.random_range(0.05..1.0)).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        EmpiricalMeasure::new(dim, pts, w).expect("valid random measure")
    };
    (0..pairs).map(|_| (draw(), draw())).collect()
}

/// Measures the ratios
/// `sup_x ‖a_t(x,γ) − a_t(x,γ̃)‖ / (W_ψ + W_k)(γ,γ̃)` (against `K`) and
/// `sup_x (|b_t(x,γ) − b_t(x,γ̃)| + |div(a_t(x,γ) − a_t(x,γ̃))|) / (W_ψ + W_k)(γ,γ̃)`
/// (against `ρ_t`), with 5% slack. Identical pairs are skipped and counted.
pub fn check_measure_lipschitz(
    field: &dyn CoefficientField,
    pairs: &[(EmpiricalMeasure, EmpiricalMeasure)],
    t_grid: &[f64],
    x_grid: &[Vec<f64>],
) -> Result<Vec<AssumptionReport>> {
    const SLACK: f64 = 1.05;
    let d = field.dim();
    let meta = field.meta();
    let description = format!(
        "{} measure pairs, {} times, {} points",
        pairs.len(),
        t_grid.len(),
        x_grid.len()
    );
    let mut skipped = 0;
    let (mut diff_worst, mut drift_worst) = (0.0f64, 0.0f64);
    let mut drift_declared = f64::INFINITY;
    let mut drift_pass = true;
    let (mut a1, mut a2) = (vec![0.0; d * d], vec![0.0; d * d]);
    let (mut b1, mut b2) = (vec![0.0; d], vec![0.0; d]);
    for (g1, g2) in pairs {
        let cost = w_psi_primal(g1, g2, &meta.psi)?.value + wasserstein_k(g1, g2, meta.k, WkMethod::ExactLp)?.value;
        if cost <= 1e-14 {
            skipped += 1;
            continue;
        }
        for &t in t_grid {
            let rho = meta.rho.at(t);
            for x in x_grid {
                field.diffusion(t, x, Some(g1), &mut a1);
                field.diffusion(t, x, Some(g2), &mut a2);
                let gap = DMatrix::from_fn(d, d, |i, j| a1[i * d + j] - a2[i * d + j]);
                diff_worst = diff_worst.max(linalg::symmetric_operator_norm(&gap) / cost);
                field.drift(t, x, Some(g1), &mut b1);
                field.drift(t, x, Some(g2), &mut b2);
                let div1 = divergence(&|y, out| field.diffusion(t, y, Some(g1), out), x, None)?;
                let div2 = divergence(&|y, out| field.diffusion(t, y, Some(g2), out), x, None)?;
                let ratio = (crate::measures::distance(&b1, &b2) + crate::measures::distance(&div1, &div2)) / cost;
                if ratio > drift_worst {
                    drift_worst = ratio;
                    drift_declared = rho;
                }
                if ratio > SLACK * rho {
                    drift_pass = false;
                }
            }
        }
    }
    Ok(vec![
        AssumptionReport {
            predicate: "measure-lipschitz-diffusion".into(),
            pass: diff_worst <= SLACK * meta.lipschitz,
            measured_constant: diff_worst,
            declared_constant: Some(meta.lipschitz),
            sample_description: description.clone(),
            skipped,
        },
        AssumptionReport {
            predicate: "measure-lipschitz-drift".into(),
            pass: drift_pass,
            measured_constant: drift_worst,
            declared_constant: drift_declared.is_finite().then_some(drift_declared),
            sample_description: description,
            skipped,
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn exa_trivial_kernels_give_frozen_diffusion() {
        let k = ExaKernels {
            dim: 2,
            lambda: 2.0,
            b0: AffineDrift {
                matrix: Some(vec![-1.0, 0.0, 0.5, -2.0]),
                offset: Some(vec![0.3, -0.1]),
            },
            b_tilde: InteractionKernel::Zero,
            sigma_tilde: NoiseKernel::Zero,
            lipschitz: 0.0,
            psi: PsiModulus::linear(),
            k: 2.0,
        };
        let f = assemble_exa(k).unwrap();
        assert!(!f.is_measure_dependent());
        let mut a = vec![0.0; 4];
        f.diffusion(0.0, &[1.0, 2.0], None, &mut a);
        assert_eq!(a, vec![1.0, 0.0, 0.0, 1.0]);
        let mut b = vec![0.0; 2];
        f.drift(0.0, &[1.0, 2.0], None, &mut b);
        assert!((b[0] - (-1.0 + 0.3)).abs() < 1e-15 && (b[1] - (0.5 - 4.0 - 0.1)).abs() < 1e-15);
    }

    #[test]
    fn mean_field_ou_drift() {
        let f = assemble_exa(ExaKernels::mean_field_ou(1)).unwrap();
        let mu = EmpiricalMeasure::new(1, vec![0.0, 2.0, 4.0], vec![0.25, 0.25, 0.5]).unwrap();
        let mut b = [0.0];
        f.drift(0.0, &[1.0], Some(&mu), &mut b);
        assert!((b[0] - (-1.0 + 2.5)).abs() < 1e-15);
        let frozen = f.bind(0.0, Some(&mu));
        let mut bb = [0.0];
        frozen.drift(&[1.0], &mut bb);
        assert_eq!(b, bb);
        let (mut p0, mut p1) = ([0.0], [0.0]);
        f.drift_parts(0.0, &[1.0], Some(&mu), &mut p0, &mut p1);
        assert!((p0[0] + p1[0] - b[0]).abs() < 1e-10);
        let mut a = [0.0];
        f.diffusion(0.0, &[1.0], Some(&mu), &mut a);
        assert_eq!(a[0], 1.0);
    }

    #[test]
    fn constant_noise_kernel_matrix_arithmetic() {
        let k = ExaKernels {
            dim: 3,
            lambda: 1.0,
            b0: zero_drift(),
            b_tilde: InteractionKernel::Zero,
            sigma_tilde: NoiseKernel::Constant { scale: 1.0 },
            lipschitz: 0.0,
            psi: PsiModulus::linear(),
            k: 2.0,
        };
        let f = assemble_exa(k).unwrap();
        let mut a = vec![0.0; 9];
        f.diffusion(0.0, &[0.0; 3], None, &mut a);
        assert_eq!(a, identity(3));
    }

    #[test]
    fn exa_diffusion_has_lambda_floor() {
        let k = ExaKernels {
            dim: 2,
            lambda: 0.7,
            b0: zero_drift(),
            b_tilde: InteractionKernel::PsiOdd { scale: 0.5 },
            sigma_tilde: NoiseKernel::PsiBounded { scale: 1.3 },
            lipschitz: 1.0,
            psi: PsiModulus::power(0.5).unwrap(),
            k: 2.0,
        };
        let f = assemble_exa(k).unwrap();
        for (mu, _) in random_measure_pairs(2, 30, 6, 3.0, 5) {
            let mut a = vec![0.0; 4];
            f.diffusion(0.1, &[0.2, -0.4], Some(&mu), &mut a);
            let min = linalg::min_eigenvalue(&DMatrix::from_row_slice(2, 2, &a));
            assert!(min >= 0.35 - 1e-15);
        }
    }

    #[test]
    fn kernel_lipschitz_spot_check() {
        let mut k = ExaKernels::mean_field_ou(2);
        assert!(k.check_kernel_lipschitz(500, 3.0, 1).pass);
        k.b_tilde = InteractionKernel::PsiOdd { scale: 1.0 };
        k.psi = PsiModulus::power(0.5).unwrap();
        k.lipschitz = 2.0 * 2f64.sqrt();
        let r = k.check_kernel_lipschitz(2000, 3.0, 2);
        assert!(r.pass, "{r:?}");
        k.lipschitz = 0.1;
        assert!(!k.check_kernel_lipschitz(2000, 3.0, 2).pass);
    }

    #[test]
    fn field_spec_json() {
        let spec: FieldSpec = serde_json::from_str(r#"{"family":"mean_field_ou","params":{"dim":1}}"#).unwrap();
        assert!(spec.build().unwrap().is_measure_dependent());
        let spec: FieldSpec = serde_json::from_str(
            r#"{"family":"frozen","params":{"dim":1,"drift_matrix":[-1.0],"diffusion":[1.0]}}"#,
        )
        .unwrap();
        let f = spec.build().unwrap();
        let mut b = [0.0];
        f.drift(0.0, &[2.0], None, &mut b);
        assert_eq!(b[0], -2.0);
        let bad: FieldSpec =
            serde_json::from_str(r#"{"family":"frozen","params":{"dim":1,"diffusion":[-1.0]}}"#).unwrap();
        assert!(matches!(bad.build(), Err(LabError::NotSpd(_))));
        let exa = r#"{"family":"exa_kernels","params":{"dim":1,"lambda":1.0,
            "b_tilde":{"kind":"psi_odd","scale":0.5},"sigma_tilde":{"kind":"psi_bounded","scale":0.5},
            "K":1.0,"psi":{"family":"power","params":{"alpha":0.5}}}}"#;
        let spec: FieldSpec = serde_json::from_str(exa).unwrap();
        assert_eq!(spec.build().unwrap().dim(), 1);
    }

    #[test]
    fn perturbation_shifts_coefficients() {
        let base: Arc<dyn CoefficientField> = Arc::new(AffineField::ornstein_uhlenbeck(1, 1.0, 1.0).unwrap());
        let p = PerturbedField::new(base, 0.25, vec![1.0], vec![2.0]).unwrap();
        let mut b = [0.0];
        p.drift(0.0, &[1.0], None, &mut b);
        assert_eq!(b[0], -0.75);
        let frozen = p.bind(0.0, None);
        let mut a = [0.0];
        frozen.diffusion(&[0.0], &mut a);
        assert_eq!(a[0], 1.5);
        assert!(p.diffusion_spd_at(&[(0.0, vec![0.0])]));
        let base: Arc<dyn CoefficientField> = Arc::new(AffineField::ornstein_uhlenbeck(1, 1.0, 1.0).unwrap());
        let q = PerturbedField::new(base, 0.6, vec![0.0], vec![-2.0]).unwrap();
        assert!(!q.diffusion_spd_at(&[(0.0, vec![0.0])]));
    }

    #[test]
    fn scr_k_examples() {
        assert!(scr_k_membership(4.0, 4.0, 1));
        assert!(!scr_k_membership(3.0, 3.0, 2));
        assert!(!scr_k_membership(2.0, 10.0, 1));
    }

    #[test]
    fn m0_examples() {
        assert!((compute_m0(4.0, 4.0, 1).unwrap() - 1.6).abs() < 1e-12);
        assert!((compute_m0(8.0, 8.0, 2).unwrap() - 4.0 / 3.0).abs() < 1e-12);
        assert!((compute_m0(12.0, 12.0, 3).unwrap() - 24.0 / 19.0).abs() < 1e-12);
        assert!(compute_m0(3.0, 3.0, 2).is_err());
    }

    #[test]
    fn lpq_examples() {
        let zero = tilde_lpq_norm(&|_, _| 0.0, 4.0, 4.0, 0.0, 1.0, LpqGrid::default_for(2), &[vec![0.0, 0.0]]).unwrap();
        assert_eq!(zero.value, 0.0);
        let (p, q, c, t) = (4.0, 3.0, 2.5, 2.0);
        for (d, vol) in [(1usize, 2.0), (2, PI), (3, 4.0 * PI / 3.0)] {
            let centers = vec![vec![0.3; d]];
            let est = tilde_lpq_norm(&|_, _| c, p, q, 0.0, t, LpqGrid::default_for(d), &centers).unwrap();
            let exact = c * f64::powf(vol, 1.0 / p) * t.powf(1.0 / q);
            assert!((est.value / exact - 1.0).abs() < 0.01, "d={d}: {} vs {exact}", est.value);
        }
        let ind = |_: f64, x: &[f64]| if norm(x) <= 1.0 { 1.0 } else { 0.0 };
        let centers = vec![vec![0.0, 0.0], vec![3.0, 0.0], vec![0.5, 0.5]];
        let est = tilde_lpq_norm(&ind, p, q, 0.5, 1.5, LpqGrid::default_for(2), &centers).unwrap();
        assert!((est.value / PI.powf(1.0 / p) - 1.0).abs() < 0.01);
        assert_eq!(est.best_center, vec![0.0, 0.0]);
    }

    #[test]
    fn divergence_examples() {
        let constant = |_: &[f64], out: &mut [f64]| out.copy_from_slice(&[2.0, 0.5, 0.5, 1.0]);
        assert!(divergence(&constant, &[0.3, 0.7], None).unwrap().iter().all(|v| v.abs() < 1e-12));
        let sq = |x: &[f64], out: &mut [f64]| out.copy_from_slice(&[x[0] * x[0], 0.0, 0.0, x[0] * x[0]]);
        let v = divergence(&sq, &[0.8, -0.2], None).unwrap();
        assert!((v[0] - 1.6).abs() < 1e-8 && v[1].abs() < 1e-12);
        let c = [1.0, 2.0, 3.0, 4.0];
        let lin = |x: &[f64], out: &mut [f64]| {
            for (o, ci) in out.iter_mut().zip(&c) {
                *o = ci * x[0];
            }
        };
        let v = divergence(&lin, &[0.4, 0.1], None).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-9 && (v[1] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn divergence_is_second_order() {
        let field = |x: &[f64], out: &mut [f64]| {
            out.copy_from_slice(&[x[0].sin(), x[1].exp(), x[0] * x[1].cos(), (x[0] * x[1]).sin()])
        };
        let x = [0.7f64, 0.4];
        let exact = [x[0].cos() + x[1].exp(), x[1].cos() + x[0] * (x[0] * x[1]).cos()];
        let err = |h: f64| {
            let v = divergence(&field, &x, Some(h)).unwrap();
            (v[0] - exact[0]).abs() + (v[1] - exact[1]).abs()
        };
        let ratio = err(1e-2) / err(5e-3);
        assert!((ratio / 4.0 - 1.0).abs() < 0.3, "{ratio}");
    }

    #[test]
    fn measure_lipschitz_checks() {
        let pairs = random_measure_pairs(1, 25, 6, 2.0, 11);
        let x_grid = vec![vec![-1.0], vec![0.0], vec![1.5]];
        let free = AffineField::ornstein_uhlenbeck(1, 1.0, 1.0).unwrap();
        for r in check_measure_lipschitz(&free, &pairs, &[0.5], &x_grid).unwrap() {
            assert!(r.pass && r.measured_constant == 0.0);
        }
        let ou = assemble_exa(ExaKernels::mean_field_ou(1)).unwrap();
        let reports = check_measure_lipschitz(&ou, &pairs, &[0.5], &x_grid).unwrap();
        assert!(reports.iter().all(|r| r.pass));
        assert!(reports[1].measured_constant <= 1.0);
        let mut same = pairs.clone();
        same.push((pairs[0].0.clone(), pairs[0].0.clone()));
        assert_eq!(check_measure_lipschitz(&ou, &same, &[0.5], &x_grid).unwrap()[0].skipped, 1);
        let k = ExaKernels {
            dim: 1,
            lambda: 1.0,
            b0: zero_drift(),
            b_tilde: InteractionKernel::PsiOdd { scale: 0.5 },
            sigma_tilde: NoiseKernel::PsiBounded { scale: 0.5 },
            lipschitz: 2.0,
            psi: PsiModulus::power(0.5).unwrap(),
            k: 2.0,
        };
        let exa = assemble_exa(k).unwrap();
        let reports = check_measure_lipschitz(&exa, &pairs, &[0.5], &x_grid).unwrap();
        assert!(reports.iter().all(|r| r.pass), "{reports:?}");
    }
}
