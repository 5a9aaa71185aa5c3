//! Log-domain Sinkhorn iterations for entropically regularised transport.

use crate::error::{LabError, Result};

#[derive(Debug, Clone)]
pub struct SinkhornSolution {
    /// `Σ π_ij c_ij` for the regularised plan.
    pub transport_cost: f64,
    pub plan: Vec<f64>,
    pub iterations: usize,
    pub marginal_error: f64,
    pub epsilon: f64,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Solves the entropic problem with regularisation `epsilon`, stopping when
/// the row marginals are within `tol` in `ℓ¹`.
pub fn sinkhorn(a: &[f64], b: &[f64], cost: &[f64], epsilon: f64, tol: f64, max_iter: usize) -> Result<SinkhornSolution> {
    let n = a.len();
    let m = b.len();
    if cost.len() != n * m || !(epsilon > 0.0) {
        return Err(LabError::MethodInfeasible {
            method: "sinkhorn",
            reason: format!("epsilon {epsilon} or cost shape invalid"),
        });
    }
    let la: Vec<f64> = a.iter().map(|v| v.ln()).collect();
    let lb: Vec<f64> = b.iter().map(|v| v.ln()).collect();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut err = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        for i in 0..n {
            let row = &cost[i * m..(i + 1) * m];
            f[i] = -epsilon * log_sum_exp((0..m).map(|j| lb[j] + (g[j] - row[j]) / epsilon));
        }
        for j in 0..m {
            g[j] = -epsilon * log_sum_exp((0..n).map(|i| la[i] + (f[i] - cost[i * m + j]) / epsilon));
        }
        err = (0..n)
            .map(|i| {
                let s: f64 = (0..m)
                    .map(|j| (la[i] + lb[j] + (f[i] + g[j] - cost[i * m + j]) / epsilon).exp())
                    .sum();
                (s - a[i]).abs()
            })
            .sum();
        if err < tol {
            break;
        }
    }
    let plan: Vec<f64> = (0..n * m)
        .map(|idx| {
            let (i, j) = (idx / m, idx % m);
            (la[i] + lb[j] + (f[i] + g[j] - cost[idx]) / epsilon).exp()
        })
        .collect();
    let transport_cost = plan.iter().zip(cost).map(|(p, c)| p * c).sum();
    Ok(SinkhornSolution {
        transport_cost,
        plan,
        iterations,
        marginal_error: err,
        epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_epsilon_approaches_exact_cost() {
        let a = [0.5, 0.5];
        let b = [0.5, 0.5];
        let cost = [0.0, 1.0, 1.0, 0.0];
        let sol = sinkhorn(&a, &b, &cost, 0.01, 1e-9, 10_000).unwrap();
        assert!(sol.transport_cost < 1e-6);
        assert!(sol.marginal_error < 1e-9);
    }
}
