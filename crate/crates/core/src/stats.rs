//! Small statistics toolkit: compensated sums, moments, least-squares fits
//! and percentile bootstrap.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng;

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    compensated_sum(values.iter().copied()) / values.len() as f64
}

/// Unbiased sample variance.
pub fn variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(values);
    compensated_sum(values.iter().map(|v| (v - m) * (v - m))) / (n - 1) as f64
}

pub fn std_error(values: &[f64]) -> f64 {
    (variance(values) / values.len() as f64).sqrt()
}

/// Standard error of the unbiased variance estimator, from the fourth
/// central moment.
pub fn variance_std_error(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = mean(values);
    let m2 = compensated_sum(values.iter().map(|v| (v - m).powi(2))) / n;
    let m4 = compensated_sum(values.iter().map(|v| (v - m).powi(4))) / n;
    ((m4 - m2 * m2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n: usize,
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx = compensated_sum(x.iter().map(|v| (v - mx).powi(2)));
    if sxx <= 0.0 {
        return None;
    }
    let sxy = compensated_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let syy = compensated_sum(y.iter().map(|v| (v - my).powi(2)));
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
        n,
    })
}

/// Least squares in log–log coordinates. Nonpositive points are skipped.
pub fn log_log_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .unzip();
    linear_fit(&lx, &ly)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

/// Percentile bootstrap of `statistic` over resamples of `n` indices.
///
/// Replicates use their own seeded streams; the result is independent of
/// scheduling.
pub fn bootstrap_interval<F>(n: usize, replicates: usize, level: f64, seed: u64, statistic: F) -> Option<Interval>
where
    F: Fn(&[usize]) -> Option<f64> + Send + Sync,
{
    if n == 0 || replicates == 0 {
        return None;
    }
    let mut stats: Vec<f64> = crate::par::map_indexed(replicates, |r| {
        let mut g = rng::stream(seed, r as u64);
        let idx: Vec<usize> = (0..n).map(|_| g.random_range(0..n)).collect();
        statistic(&idx)
    })
    .into_iter()
    .flatten()
    .filter(|v| v.is_finite())
    .collect();
    if stats.is_empty() {
        return None;
    }
    stats.sort_by(|a, b| a.total_cmp(b));
    let alpha = (1.0 - level) / 2.0;
    Some(Interval {
        lower: quantile_sorted(&stats, alpha),
        upper: quantile_sorted(&stats, 1.0 - alpha),
    })
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&v, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_of_many_small_terms() {
        let n = 100_000;
        let s = compensated_sum(std::iter::repeat_n(1.0 / n as f64, n));
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exact_line_is_recovered() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let fit = linear_fit(&x, &y).unwrap();
        assert!((fit.slope - 3.0).abs() < 1e-12);
        assert!((fit.intercept + 1.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_log_power_law() {
        let x = [0.01, 0.1, 1.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 2.0 * v.powf(1.5)).collect();
        let fit = log_log_fit(&x, &y).unwrap();
        assert!((fit.slope - 1.5).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_of_mean_brackets_truth() {
        let data: Vec<f64> = (0..200).map(|i| (i % 10) as f64).collect();
        let ci = bootstrap_interval(data.len(), 400, 0.95, 7, |idx| {
            Some(idx.iter().map(|&i| data[i]).sum::<f64>() / idx.len() as f64)
        })
        .unwrap();
        assert!(ci.lower < 4.5 && 4.5 < ci.upper);
    }

    #[test]
    fn variance_and_quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert!((variance(&v) - 5.0 / 3.0).abs() < 1e-12);
        assert_eq!(median(&v), 2.5);
    }
}
