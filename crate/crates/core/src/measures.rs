//! Weighted point clouds, transport plans and distance reports.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::psi::PsiModulus;
use crate::rng;
use crate::stats::compensated_sum;

/// Tolerance on `Σ wᵢ = 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Atoms closer than this are identified when supports are merged.
pub const ATOM_MATCH_TOL: f64 = 1e-12;

/// A probability measure `Σ wᵢ δ_{xᵢ}` on `ℝ^d`. Points are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(LabError::InvalidMeasure("dimension must be positive".into()));
        }
        if weights.is_empty() {
            return Err(LabError::InvalidMeasure("measure needs at least one atom".into()));
        }
        if points.len() != dim * weights.len() {
            return Err(LabError::InvalidMeasure(format!(
                "{} coordinates do not match {} atoms in dimension {dim}",
                points.len(),
                weights.len()
            )));
        }
        if let Some(i) = points.iter().position(|v| !v.is_finite()) {
            return Err(LabError::InvalidMeasure(format!("atom {} has a non-finite coordinate", i / dim)));
        }
        if let Some(i) = weights.iter().position(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(LabError::InvalidMeasure(format!("weight {i} = {} is not a nonnegative number", weights[i])));
        }
        let total = compensated_sum(weights.iter().copied());
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(LabError::InvalidMeasure(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { dim, points, weights })
    }

    /// Equal weights `1/n` on the given atoms.
    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(LabError::InvalidMeasure("points do not form whole atoms".into()));
        }
        let n = points.len() / dim;
        Self::new(dim, points, vec![1.0 / n as f64; n])
    }

    pub fn dirac(x: &[f64]) -> Self {
        Self::new(x.len(), x.to_vec(), vec![1.0]).expect("finite Dirac mass")
    }

    pub fn from_rows(rows: &[Vec<f64>], weights: Vec<f64>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(LabError::InvalidMeasure("rows have differing lengths".into()));
        }
        Self::new(dim, rows.concat(), weights)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.points.chunks_exact(self.dim).zip(self.weights.iter().copied())
    }

    pub fn is_uniform(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|&v| (v - w).abs() <= 1e-15)
    }

    pub fn mean(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|c| compensated_sum(self.atoms().map(|(x, w)| w * x[c])))
            .collect()
    }

    /// Weighted covariance (population normalisation).
    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.mean();
        DMatrix::from_fn(self.dim, self.dim, |i, j| {
            compensated_sum(self.atoms().map(|(x, w)| w * (x[i] - m[i]) * (x[j] - m[j])))
        })
    }

    /// `‖μ‖_ψ = ∫ ψ(|x|) μ(dx)`.
    pub fn psi_moment(&self, psi: &PsiModulus) -> f64 {
        psi.moment(self.atoms().map(|(x, w)| (norm(x), w)))
    }

    /// `μ(|·|^k)`.
    pub fn moment(&self, k: f64) -> f64 {
        compensated_sum(self.atoms().map(|(x, w)| w * norm(x).powf(k)))
    }

    pub fn shifted(&self, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.dim {
            return Err(LabError::DimensionMismatch {
                expected: self.dim,
                got: shift.len(),
            });
        }
        let points = self
            .points
            .chunks_exact(self.dim)
            .flat_map(|x| x.iter().zip(shift).map(|(a, b)| a + b))
            .collect();
        Ok(Self {
            dim: self.dim,
            points,
            weights: self.weights.clone(),
        })
    }

    /// Deterministic stratified subsample of at most `size` atoms.
    ///
    /// Atoms are ordered by first coordinate (index breaks ties) and cut into
    /// `size` consecutive strata; one atom per stratum is drawn with a seeded
    /// stream and receives the stratum's total weight.
    pub fn stratified_subsample(&self, size: usize, seed: u64) -> Self {
        let n = self.len();
        if size == 0 || n <= size {
            return self.clone();
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.point(a)[0].total_cmp(&self.point(b)[0]).then(a.cmp(&b)));
        let mut g = rng::stream(seed, 0x5eed);
        let mut points = Vec::with_capacity(size * self.dim);
        let mut weights = Vec::with_capacity(size);
        for s in 0..size {
            let lo = s * n / size;
            let hi = (s + 1) * n / size;
            let pick = order[g.random_range(lo..hi)];
            points.extend_from_slice(self.point(pick));
            weights.push(compensated_sum(order[lo..hi].iter().map(|&i| self.weights[i])));
        }
        let total = compensated_sum(weights.iter().copied());
        for w in &mut weights {
            *w /= total;
        }
        Self {
            dim: self.dim,
            points,
            weights,
        }
    }

    /// Whether both measures list the same atoms (up to [`ATOM_MATCH_TOL`]),
    /// in any order.
    pub fn same_support_as(&self, other: &Self) -> bool {
        if self.dim != other.dim {
            return false;
        }
        let (_, a, b) = union_support(self, other);
        let on_self = a.iter().filter(|w| **w > 0.0).count();
        let on_other = b.iter().filter(|w| **w > 0.0).count();
        let matched = a.iter().zip(&b).filter(|(x, y)| **x > 0.0 && **y > 0.0).count();
        matched == on_self && matched == on_other
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["weight".to_string()];
        header.extend((1..=self.dim).map(|i| format!("x{i}")));
        w.write_record(&header)?;
        for (x, wt) in self.atoms() {
            let mut row = vec![wt.to_string()];
            row.extend(x.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `weight,x1..xd` rows; a non-numeric first row is taken as header.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut dim = None;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            if line == 0 && rec.get(0).map(|s| s.parse::<f64>().is_err()).unwrap_or(false) {
                continue;
            }
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| LabError::InvalidMeasure(format!("line {}: `{s}` is not a number", line + 1)))
                })
                .collect::<Result<_>>()?;
            if vals.len() < 2 {
                return Err(LabError::InvalidMeasure(format!("line {}: need weight and coordinates", line + 1)));
            }
            let d = vals.len() - 1;
            match dim {
                None => dim = Some(d),
                Some(prev) if prev != d => {
                    return Err(LabError::InvalidMeasure(format!(
                        "line {}: {d} coordinates, expected {prev}",
                        line + 1
                    )))
                }
                _ => {}
            }
            weights.push(vals[0]);
            points.extend_from_slice(&vals[1..]);
        }
        let dim = dim.ok_or_else(|| LabError::InvalidMeasure("empty measure file".into()))?;
        Self::new(dim, points, weights)
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct MeasureJson {
    dim: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl Serialize for EmpiricalMeasure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MeasureJson {
            dim: self.dim,
            points: self.points.chunks_exact(self.dim).map(<[f64]>::to_vec).collect(),
            weights: self.weights.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for EmpiricalMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = MeasureJson::deserialize(d)?;
        if raw.points.iter().any(|p| p.len() != raw.dim) {
            return Err(serde::de::Error::custom("point length differs from dim"));
        }
        EmpiricalMeasure::new(raw.dim, raw.points.concat(), raw.weights).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Merged atom list of two measures with each measure's weight per merged
/// atom. Atoms within [`ATOM_MATCH_TOL`] are identified.
pub fn union_support(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let mut atoms: Vec<Vec<f64>> = Vec::new();
    let mut wa: Vec<f64> = Vec::new();
    let mut wb: Vec<f64> = Vec::new();
    let mut insert = |x: &[f64], w: f64, first: bool| {
        let slot = atoms.iter().position(|a| distance(a, x) <= ATOM_MATCH_TOL);
        let idx = match slot {
            Some(i) => i,
            None => {
                atoms.push(x.to_vec());
                wa.push(0.0);
                wb.push(0.0);
                atoms.len() - 1
            }
        };
        if first {
            wa[idx] += w;
        } else {
            wb[idx] += w;
        }
    };
    for (x, w) in mu.atoms() {
        insert(x, w, true);
    }
    for (x, w) in nu.atoms() {
        insert(x, w, false);
    }
    (atoms, wa, wb)
}

/// A coupling of a row and a column measure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransportPlan {
    pub rows: EmpiricalMeasure,
    pub cols: EmpiricalMeasure,
    /// Row-major `n × m` masses.
    pub plan: Vec<f64>,
}

impl TransportPlan {
    pub fn mass(&self, i: usize, j: usize) -> f64 {
        self.plan[i * self.cols.len() + j]
    }

    /// Largest deviation of the plan's marginals from the two measures.
    pub fn marginal_defect(&self) -> f64 {
        let (n, m) = (self.rows.len(), self.cols.len());
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let s = compensated_sum((0..m).map(|j| self.mass(i, j)));
            worst = worst.max((s - self.rows.weights()[i]).abs());
        }
        for j in 0..m {
            let s = compensated_sum((0..n).map(|i| self.mass(i, j)));
            worst = worst.max((s - self.cols.weights()[j]).abs());
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMethod {
    ExactLp,
    Quantile1d,
    Sinkhorn,
    Histogram,
    Knn,
    ClosedForm,
}

impl std::fmt::Display for DistanceMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            DistanceMethod::ExactLp => "exact-lp",
            DistanceMethod::Quantile1d => "quantile-1d",
            DistanceMethod::Sinkhorn => "sinkhorn",
            DistanceMethod::Histogram => "histogram",
            DistanceMethod::Knn => "knn",
            DistanceMethod::ClosedForm => "closed-form",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duality_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub support_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subsample: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub metric: String,
    pub value: f64,
    pub method: DistanceMethod,
    pub diagnostics: Diagnostics,
}

impl DistanceReport {
    pub fn new(metric: impl Into<String>, value: f64, method: DistanceMethod) -> Self {
        Self {
            metric: metric.into(),
            value: value.max(0.0),
            method,
            diagnostics: Diagnostics::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(EmpiricalMeasure::new(1, vec![0.0, 1.0], vec![0.5, 0.5]).is_ok());
        assert!(EmpiricalMeasure::new(1, vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(EmpiricalMeasure::new(1, vec![0.0, 1.0], vec![1.5, -0.5]).is_err());
        assert!(EmpiricalMeasure::new(1, vec![f64::NAN], vec![1.0]).is_err());
        assert!(EmpiricalMeasure::new(2, vec![0.0, 1.0, 2.0], vec![1.0]).is_err());
        assert!(EmpiricalMeasure::new(1, vec![], vec![]).is_err());
        let big = EmpiricalMeasure::uniform(1, (0..100_000).map(|i| i as f64).collect()).unwrap();
        assert_eq!(big.len(), 100_000);
    }

    #[test]
    fn moments_and_mean() {
        let m = EmpiricalMeasure::new(1, vec![-1.0, 3.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(m.mean(), vec![1.0]);
        assert!((m.covariance()[(0, 0)] - 4.0).abs() < 1e-15);
        assert!((m.moment(2.0) - 5.0).abs() < 1e-15);
        let psi = PsiModulus::power(0.5).unwrap();
        assert!((m.psi_moment(&psi) - 0.5 * (1.0 + 3f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn csv_and_json_round_trip() {
        let m = EmpiricalMeasure::new(2, vec![0.1, -2.0, 3.5, 1e-9], vec![0.25, 0.75]).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("weight,x1,x2\n"));
        assert_eq!(EmpiricalMeasure::read_csv(&buf[..]).unwrap(), m);
        let headerless = "0.5,1\n0.5,2\n";
        assert_eq!(EmpiricalMeasure::read_csv(headerless.as_bytes()).unwrap().len(), 2);
        let json = serde_json::to_string(&m).unwrap();
        let back: EmpiricalMeasure = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<EmpiricalMeasure>(r#"{"dim":1,"points":[[0]],"weights":[0.3]}"#).is_err());
    }

    #[test]
    fn stratified_subsample_keeps_mass_and_is_deterministic() {
        let m = EmpiricalMeasure::uniform(1, (0..1000).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let a = m.stratified_subsample(100, 3);
        let b = m.stratified_subsample(100, 3);
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
        assert!(a.is_uniform());
        let shifted = m.shifted(&[0.5]).unwrap().stratified_subsample(100, 3);
        for (p, q) in a.points().iter().zip(shifted.points()) {
            assert!((q - p - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn support_matching() {
        let a = EmpiricalMeasure::new(1, vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        let b = EmpiricalMeasure::new(1, vec![1.0, 0.0], vec![0.25, 0.75]).unwrap();
        let c = EmpiricalMeasure::new(1, vec![0.0, 2.0], vec![0.5, 0.5]).unwrap();
        assert!(a.same_support_as(&b));
        assert!(!a.same_support_as(&c));
        let (atoms, wa, wb) = union_support(&a, &c);
        assert_eq!(atoms.len(), 3);
        assert_eq!(wa, vec![0.5, 0.5, 0.0]);
        assert_eq!(wb, vec![0.5, 0.0, 0.5]);
    }
}
