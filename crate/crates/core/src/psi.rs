//! Concave moduli `ψ` (increasing, concave, positive away from zero) and the
//! scalar functionals that decide which estimates apply to a given modulus.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Absolute tolerance of the adaptive Simpson rule used by the integral
/// diagnostics.
pub const QUADRATURE_TOL: f64 = 1e-9;

/// Decade cutoffs `10⁻¹ … 10⁻⁸` probed by the divergence test.
const DIVERGENCE_DECADES: usize = 8;
/// Consecutive decade increments decaying slower than this ratio are read as
/// logarithmic growth, i.e. divergence.
const DIVERGENCE_RATIO: f64 = 0.85;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum PsiFamily {
    /// `r^α`, `α ∈ (0, 1]`.
    Power { alpha: f64 },
    /// `r`.
    Linear,
    /// `c` for every `r` (total variation scale when `c = 2`).
    Constant { c: f64 },
    /// `(−ln r)^{−β}` on `(0, e^{−(β+1)}]`, continued by its tangent line.
    LogReciprocal { beta: f64 },
    /// Piecewise-linear through `(r, ψ(r))` knots starting at `r = 0`.
    Tabulated { knots: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiModulus {
    #[serde(flatten)]
    family: PsiFamily,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralVerdict {
    pub value: f64,
    pub diverges: bool,
}

impl PsiModulus {
    pub fn new(family: PsiFamily) -> Result<Self> {
        validate(&family)?;
        let description = describe(&family);
        Ok(Self {
            family,
            description,
        })
    }

    pub fn linear() -> Self {
        Self::new(PsiFamily::Linear).expect("linear modulus is valid")
    }

    pub fn power(alpha: f64) -> Result<Self> {
        Self::new(PsiFamily::Power { alpha })
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(PsiFamily::Constant { c })
    }

    pub fn log_reciprocal(beta: f64) -> Result<Self> {
        Self::new(PsiFamily::LogReciprocal { beta })
    }

    pub fn tabulated(knots: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(PsiFamily::Tabulated { knots })
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }

    pub fn family(&self) -> &PsiFamily {
        &self.family
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    /// Re-validates after deserialisation.
    pub fn validated(self) -> Result<Self> {
        validate(&self.family)?;
        Ok(self)
    }

    /// `ψ(r)`; negative or NaN `r` is a domain error.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if r.is_nan() || r < 0.0 {
            return Err(LabError::domain(format!("ψ evaluated at r = {r}")));
        }
        Ok(self.at(r))
    }

    /// `ψ(r)` for `r ≥ 0` without the domain check (negative input is
    /// clamped to zero). Used on hot paths where `r` is a distance.
    pub fn at(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        match &self.family {
            PsiFamily::Power { alpha } => {
                if *alpha == 1.0 {
                    r
                } else if *alpha == 0.5 {
                    r.sqrt()
                } else {
                    r.powf(*alpha)
                }
            }
            PsiFamily::Linear => r,
            PsiFamily::Constant { c } => *c,
            PsiFamily::LogReciprocal { beta } => {
                let r0 = (-(beta + 1.0)).exp();
                if r == 0.0 {
                    0.0
                } else if r <= r0 {
                    (-r.ln()).powf(-beta)
                } else {
                    let slope = beta * (beta + 1.0).powf(-beta - 1.0) / r0;
                    (beta + 1.0).powf(-beta) + slope * (r - r0)
                }
            }
            PsiFamily::Tabulated { knots } => tabulated_eval(knots, r),
        }
    }

    /// Limit `ψ(0⁺)`; moduli with a positive limit are never Dini.
    pub fn limit_at_zero(&self) -> f64 {
        match &self.family {
            PsiFamily::Constant { c } => *c,
            PsiFamily::Tabulated { knots } => knots[0].1,
            _ => 0.0,
        }
    }

    /// `∫_{lower}^{upper} ψ(s)^power / s ds`, integrated in `u = ln s` where
    /// the integrand is smooth and bounded.
    pub fn log_integral(&self, power: i32, lower: f64, upper: f64) -> Result<f64> {
        if !(lower > 0.0) || !(upper >= lower) {
            return Err(LabError::domain(format!(
                "log integral bounds must satisfy 0 < lower ≤ upper, got [{lower}, {upper}]"
            )));
        }
        let f = |u: f64| self.at(u.exp()).powi(power);
        Ok(adaptive_simpson(&f, lower.ln(), upper.ln(), QUADRATURE_TOL))
    }

    /// `∫_{cutoff}^1 ψ(s)/s ds` with a divergence verdict as `cutoff → 0`.
    pub fn dini_integral(&self, lower_cutoff: f64) -> Result<IntegralVerdict> {
        self.integral_with_verdict(1, lower_cutoff)
    }

    /// `∫_{cutoff}^1 ψ(s)²/s ds` with a divergence verdict as `cutoff → 0`.
    pub fn square_dini_integral(&self, lower_cutoff: f64) -> Result<IntegralVerdict> {
        self.integral_with_verdict(2, lower_cutoff)
    }

    fn integral_with_verdict(&self, power: i32, lower_cutoff: f64) -> Result<IntegralVerdict> {
        if !(lower_cutoff > 0.0 && lower_cutoff < 1.0) {
            return Err(LabError::domain(format!(
                "lower cutoff must lie in (0, 1), got {lower_cutoff}"
            )));
        }
        let value = self.log_integral(power, lower_cutoff, 1.0)?;
        Ok(IntegralVerdict {
            value,
            diverges: self.diverges(power)?,
        })
    }

    /// Decade increments `∫_{10^{-j-1}}^{10^{-j}}` for `j = 1..8`. A
    /// convergent integral has increments that eventually decay at least
    /// geometrically; increments that stay comparable to the log of the
    /// cutoff ratio signal divergence.
    fn diverges(&self, power: i32) -> Result<bool> {
        let mut increments = Vec::with_capacity(DIVERGENCE_DECADES - 1);
        for j in 1..DIVERGENCE_DECADES {
            let hi = 10f64.powi(-(j as i32));
            let lo = hi / 10.0;
            increments.push(self.log_integral(power, lo, hi)?);
        }
        let last = increments[increments.len() - 1];
        let prev = increments[increments.len() - 2];
        Ok(last > 1e-12 && last >= DIVERGENCE_RATIO * prev)
    }

    /// Whether `ψ(r)² log(1 + 1/r)` decreases to zero along `r = 10⁻ⁿ`,
    /// `n = 1..12`, ending below `10⁻³` of its initial value.
    pub fn log_vanishing_check(&self) -> bool {
        let values: Vec<f64> = (1..=12)
            .map(|n| {
                let r = 10f64.powi(-n);
                self.at(r).powi(2) * (1.0 + 1.0 / r).ln()
            })
            .collect();
        let decreasing = values.windows(2).all(|w| w[1] <= w[0]);
        decreasing && values[11] < 1e-3 * values[0]
    }

    /// `∫_{|x|} ψ(|x|) μ(dx)`-style moment of a set of weighted radii.
    pub fn moment(&self, radii_weights: impl IntoIterator<Item = (f64, f64)>) -> f64 {
        crate::stats::compensated_sum(radii_weights.into_iter().map(|(r, w)| w * self.at(r)))
    }
}

/// Discrete `ψ`-continuity modulus `max_{x≠y} |f(x) − f(y)| / ψ(|x − y|)`.
pub fn continuity_modulus(f_values: &[(Vec<f64>, f64)], psi: &PsiModulus) -> Result<f64> {
    let n = f_values.len();
    let mut best: f64 = 0.0;
    let mut distinct_pairs = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            let (x, fx) = (&f_values[i].0, f_values[i].1);
            let (y, fy) = (&f_values[j].0, f_values[j].1);
            if x.len() != y.len() {
                return Err(LabError::DimensionMismatch {
                    expected: x.len(),
                    got: y.len(),
                });
            }
            let dist = euclid(x, y);
            if dist == 0.0 {
                if fx != fy {
                    return Err(LabError::Inconsistent(format!(
                        "point {x:?} carries values {fx} and {fy}"
                    )));
                }
                continue;
            }
            distinct_pairs += 1;
            best = best.max((fx - fy).abs() / psi.at(dist));
        }
    }
    if distinct_pairs == 0 {
        return Err(LabError::domain("continuity modulus needs at least two distinct points"));
    }
    Ok(best)
}

fn euclid(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn describe(family: &PsiFamily) -> String {
    match family {
        PsiFamily::Power { alpha } => format!("r^{alpha}"),
        PsiFamily::Linear => "r".into(),
        PsiFamily::Constant { c } => format!("{c}"),
        PsiFamily::LogReciprocal { beta } => format!("(-ln r)^(-{beta}) near 0"),
        PsiFamily::Tabulated { knots } => format!("tabulated ({} knots)", knots.len()),
    }
}

fn validate(family: &PsiFamily) -> Result<()> {
    match family {
        PsiFamily::Power { alpha } => {
            if !(*alpha > 0.0 && *alpha <= 1.0) {
                return Err(LabError::domain(format!("power exponent must lie in (0, 1], got {alpha}")));
            }
        }
        PsiFamily::Linear => {}
        PsiFamily::Constant { c } => {
            if !(*c > 0.0 && c.is_finite()) {
                return Err(LabError::domain(format!("constant modulus must be positive, got {c}")));
            }
        }
        PsiFamily::LogReciprocal { beta } => {
            if !(*beta > 0.0 && beta.is_finite()) {
                return Err(LabError::domain(format!("log-reciprocal exponent must be positive, got {beta}")));
            }
        }
        PsiFamily::Tabulated { knots } => validate_knots(knots)?,
    }
    Ok(())
}

fn validate_knots(knots: &[(f64, f64)]) -> Result<()> {
    if knots.len() < 2 {
        return Err(LabError::domain("tabulated modulus needs at least two knots"));
    }
    if knots[0].0 != 0.0 {
        return Err(LabError::domain("first knot must sit at r = 0"));
    }
    if knots.iter().any(|(r, v)| !r.is_finite() || !v.is_finite() || *v < 0.0) {
        return Err(LabError::domain("knots must be finite with nonnegative values"));
    }
    let mut prev_slope = f64::INFINITY;
    for w in knots.windows(2) {
        let (r1, v1) = w[0];
        let (r2, v2) = w[1];
        if r2 <= r1 {
            return Err(LabError::domain("knot abscissae must be strictly increasing"));
        }
        if v2 <= 0.0 {
            return Err(LabError::domain(format!("ψ({r2}) must be positive")));
        }
        let slope = (v2 - v1) / (r2 - r1);
        if slope < 0.0 {
            return Err(LabError::domain(format!("table decreases on [{r1}, {r2}]")));
        }
        if slope > prev_slope + 1e-12 * prev_slope.abs().max(1.0) {
            return Err(LabError::domain(format!(
                "table is not concave: slope rises to {slope} on [{r1}, {r2}]"
            )));
        }
        prev_slope = slope;
    }
    Ok(())
}

fn tabulated_eval(knots: &[(f64, f64)], r: f64) -> f64 {
    let idx = knots.partition_point(|(kr, _)| *kr <= r);
    let seg = idx.clamp(1, knots.len() - 1);
    let (r1, v1) = knots[seg - 1];
    let (r2, v2) = knots[seg];
    let slope = ((v2 - v1) / (r2 - r1)).max(0.0);
    v1 + slope * (r - r1)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 60)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn built_ins() -> Vec<PsiModulus> {
        vec![
            PsiModulus::linear(),
            PsiModulus::power(0.5).unwrap(),
            PsiModulus::power(0.3).unwrap(),
            PsiModulus::constant(2.0).unwrap(),
            PsiModulus::log_reciprocal(0.75).unwrap(),
            PsiModulus::log_reciprocal(2.0).unwrap(),
            PsiModulus::tabulated(vec![(0.0, 0.0), (0.5, 1.0), (1.0, 1.4), (3.0, 2.0)]).unwrap(),
        ]
    }

    #[test]
    fn eval_examples() {
        assert_eq!(PsiModulus::power(1.0).unwrap().eval(0.5).unwrap(), 0.5);
        assert_eq!(PsiModulus::constant(2.0).unwrap().eval(7.3).unwrap(), 2.0);
        assert_eq!(PsiModulus::power(0.5).unwrap().eval(4.0).unwrap(), 2.0);
        assert!(PsiModulus::linear().eval(-1e-3).is_err());
        assert!(PsiModulus::linear().eval(f64::NAN).is_err());
    }

    #[test]
    fn rejects_invalid_families() {
        assert!(PsiModulus::power(0.0).is_err());
        assert!(PsiModulus::power(1.5).is_err());
        assert!(PsiModulus::constant(-1.0).is_err());
        assert!(PsiModulus::tabulated(vec![(0.0, 0.0), (1.0, 1.0), (2.0, 3.0)]).is_err());
        assert!(PsiModulus::tabulated(vec![(0.0, 1.0), (1.0, 0.5)]).is_err());
        assert!(PsiModulus::tabulated(vec![(0.5, 1.0), (1.0, 1.5)]).is_err());
    }

    #[test]
    fn tabulated_interpolates_and_extrapolates() {
        let psi = PsiModulus::tabulated(vec![(0.0, 0.0), (1.0, 2.0), (2.0, 3.0)]).unwrap();
        assert!((psi.at(0.5) - 1.0).abs() < 1e-15);
        assert!((psi.at(1.5) - 2.5).abs() < 1e-15);
        assert!((psi.at(4.0) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn log_reciprocal_is_continuous_at_the_junction() {
        let beta = 0.75;
        let psi = PsiModulus::log_reciprocal(beta).unwrap();
        let r0 = (-(beta + 1.0f64)).exp();
        assert!((psi.at(r0 * (1.0 - 1e-9)) - psi.at(r0 * (1.0 + 1e-9))).abs() < 1e-8);
    }

    #[test]
    fn dini_examples() {
        let half = PsiModulus::power(0.5).unwrap().dini_integral(1e-12).unwrap();
        assert!((half.value - 2.0).abs() < 1e-5 && !half.diverges);
        let lin = PsiModulus::linear().dini_integral(1e-12).unwrap();
        assert!((lin.value - 1.0).abs() < 1e-9 && !lin.diverges);
        assert!(PsiModulus::constant(2.0).unwrap().dini_integral(1e-6).unwrap().diverges);
        assert!(PsiModulus::log_reciprocal(1.0).unwrap().dini_integral(1e-6).unwrap().diverges);
        assert!(!PsiModulus::log_reciprocal(2.0).unwrap().dini_integral(1e-6).unwrap().diverges);
        assert!(PsiModulus::linear().dini_integral(1.0).is_err());
    }

    #[test]
    fn square_dini_examples() {
        let half = PsiModulus::power(0.5).unwrap().square_dini_integral(1e-12).unwrap();
        assert!((half.value - 1.0).abs() < 1e-9 && !half.diverges);
        let lin = PsiModulus::linear().square_dini_integral(1e-12).unwrap();
        assert!((lin.value - 0.5).abs() < 1e-9 && !lin.diverges);
        assert!(PsiModulus::constant(2.0).unwrap().square_dini_integral(1e-6).unwrap().diverges);
        // β = 3/4 fails Dini but is square-Dini
        let slow = PsiModulus::log_reciprocal(0.75).unwrap();
        assert!(slow.dini_integral(1e-6).unwrap().diverges);
        assert!(!slow.square_dini_integral(1e-6).unwrap().diverges);
    }

    #[test]
    fn log_vanishing_examples() {
        assert!(PsiModulus::power(0.5).unwrap().log_vanishing_check());
        assert!(!PsiModulus::constant(2.0).unwrap().log_vanishing_check());
        assert!(PsiModulus::linear().log_vanishing_check());
    }

    #[test]
    fn continuity_modulus_examples() {
        let pts = |f: fn(f64) -> f64, xs: &[f64]| -> Vec<(Vec<f64>, f64)> {
            xs.iter().map(|&x| (vec![x], f(x))).collect()
        };
        let lin = PsiModulus::linear();
        assert!((continuity_modulus(&pts(|x| x, &[0.0, 1.0, 2.0]), &lin).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(continuity_modulus(&pts(|_| 3.0, &[0.0, 1.0, 2.0]), &lin).unwrap(), 0.0);
        let half = PsiModulus::power(0.5).unwrap();
        // pairs: (0,1) → 1/1, (0,4) → 2/2, (1,4) → 1/√3
        let v = continuity_modulus(&pts(f64::sqrt, &[0.0, 1.0, 4.0]), &half).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        let dup = vec![(vec![1.0], 1.0), (vec![1.0], 2.0), (vec![0.0], 0.0)];
        assert!(matches!(continuity_modulus(&dup, &lin), Err(LabError::Inconsistent(_))));
        assert!(continuity_modulus(&[(vec![0.0], 1.0)], &lin).is_err());
    }

    #[test]
    fn json_round_trip_and_shape() {
        let psi = PsiModulus::power(0.5).unwrap();
        let text = serde_json::to_string(&psi).unwrap();
        assert!(text.contains("\"family\":\"power\""));
        assert!(text.contains("\"params\":{\"alpha\":0.5}"));
        let back: PsiModulus = serde_json::from_str(&text).unwrap();
        assert_eq!(back.family(), psi.family());
        let lin: PsiModulus = serde_json::from_str(r#"{"family":"linear"}"#).unwrap();
        assert_eq!(lin.family(), &PsiFamily::Linear);
        let bad: PsiModulus = serde_json::from_str(r#"{"family":"power","params":{"alpha":3.0}}"#).unwrap();
        assert!(bad.validated().is_err());
    }

    #[test]
    fn dini_implies_square_dini_for_built_ins() {
        for psi in built_ins() {
            let dini = psi.dini_integral(1e-8).unwrap();
            let sq = psi.square_dini_integral(1e-8).unwrap();
            if !dini.diverges {
                assert!(!sq.diverges, "{}", psi.description());
            }
        }
    }

    #[test]
    fn monotone_and_midpoint_concave_on_grid() {
        for psi in built_ins() {
            let grid: Vec<f64> = (0..400).map(|i| i as f64 * 0.0125).collect();
            for w in grid.windows(2) {
                assert!(psi.at(w[0]) <= psi.at(w[1]) + 1e-15);
            }
            for (i, &r1) in grid.iter().enumerate().step_by(7) {
                for &r2 in grid[i..].iter().step_by(11) {
                    let mid = psi.at(0.5 * (r1 + r2));
                    let chord = 0.5 * (psi.at(r1) + psi.at(r2));
                    assert!(mid >= chord - 1e-12 * psi.at(r2).max(1.0), "{}", psi.description());
                }
            }
        }
    }

    proptest! {
        #[test]
        fn doubling_inequality(r in 0.0f64..50.0, scale in 1.0f64..100.0, which in 0usize..7) {
            let psi = &built_ins()[which];
            prop_assert!(psi.at(scale * r) <= scale * psi.at(r) + 1e-12);
        }

        #[test]
        fn subadditivity(r1 in 0.0f64..20.0, r2 in 0.0f64..20.0, which in 0usize..7) {
            let psi = &built_ins()[which];
            prop_assert!(psi.at(r1 + r2) <= psi.at(r1) + psi.at(r2) + 1e-12);
        }
    }
}
