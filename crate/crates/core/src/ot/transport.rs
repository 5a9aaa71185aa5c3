//! Exact balanced transport by successive shortest augmenting paths.
//!
//! Sources carry masses `a`, sinks masses `b`, arcs `i → j` have unbounded
//! capacity and cost `c_ij ≥ 0`. Dijkstra runs on reduced costs
//! `c_ij + π_i − π_j`, which stay nonnegative on the residual graph, so the
//! final potentials are an optimal dual and the duality gap is reported.

use crate::error::{LabError, Result};

const MASS_TOL: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct TransportSolution {
    /// Row-major `n × m` optimal plan.
    pub plan: Vec<f64>,
    pub cost: f64,
    /// Dual objective `Σ aᵢαᵢ + Σ bⱼβⱼ` of a feasible dual built from the
    /// final potentials.
    pub dual_cost: f64,
    pub augmentations: usize,
}

impl TransportSolution {
    pub fn duality_gap(&self) -> f64 {
        self.cost - self.dual_cost
    }
}

/// Solves `min Σ π_ij c_ij` over couplings of `a` and `b`. `cost` is
/// row-major `n × m` and must be finite and nonnegative.
pub fn solve_transport(a: &[f64], b: &[f64], cost: &[f64]) -> Result<TransportSolution> {
    let n = a.len();
    let m = b.len();
    if n == 0 || m == 0 || cost.len() != n * m {
        return Err(LabError::Lp(format!("cost matrix is {} entries for a {n}×{m} problem", cost.len())));
    }
    if cost.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(LabError::Lp("costs must be finite and nonnegative".into()));
    }
    let mut excess = a.to_vec();
    let mut deficit = b.to_vec();
    let mut flow = vec![0.0; n * m];
    // potentials: sources 0..n, sinks n..n+m
    let mut pot = vec![0.0; n + m];
    let total = n + m;
    let mut dist = vec![f64::INFINITY; total];
    let mut pred = vec![usize::MAX; total];
    let mut done = vec![false; total];
    let mut augmentations = 0usize;

    loop {
        let supply_left: f64 = excess.iter().filter(|e| **e > MASS_TOL).sum();
        let demand_left: f64 = deficit.iter().filter(|e| **e > MASS_TOL).sum();
        if supply_left <= MASS_TOL || demand_left <= MASS_TOL {
            break;
        }
        dist.fill(f64::INFINITY);
        pred.fill(usize::MAX);
        done.fill(false);
        for i in 0..n {
            if excess[i] > MASS_TOL {
                dist[i] = 0.0;
            }
        }
        let mut target = None;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for (v, &dv) in dist.iter().enumerate() {
                if !done[v] && dv < best {
                    best = dv;
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u >= n {
                let j = u - n;
                if deficit[j] > MASS_TOL {
                    target = Some(u);
                    break;
                }
                // reverse arcs j → i where flow is positive
                for i in 0..n {
                    if done[i] || flow[i * m + j] <= 0.0 {
                        continue;
                    }
                    let rc = (-cost[i * m + j] + pot[u] - pot[i]).max(0.0);
                    let nd = best + rc;
                    if nd < dist[i] {
                        dist[i] = nd;
                        pred[i] = u;
                    }
                }
            } else {
                let i = u;
                let row = &cost[i * m..(i + 1) * m];
                for j in 0..m {
                    let v = n + j;
                    if done[v] {
                        continue;
                    }
                    let rc = (row[j] + pot[i] - pot[v]).max(0.0);
                    let nd = best + rc;
                    if nd < dist[v] {
                        dist[v] = nd;
                        pred[v] = i;
                    }
                }
            }
        }
        let Some(t) = target else {
            return Err(LabError::Lp("no augmenting path although supply remains".into()));
        };
        let dt = dist[t];
        // bottleneck along the path
        let mut bottleneck = deficit[t - n];
        let mut v = t;
        while pred[v] != usize::MAX {
            let p = pred[v];
            if v < n {
                // reverse arc p(sink) → v(source)
                bottleneck = bottleneck.min(flow[v * m + (p - n)]);
            }
            v = p;
        }
        bottleneck = bottleneck.min(excess[v]);
        // augment
        let mut v = t;
        while pred[v] != usize::MAX {
            let p = pred[v];
            if v >= n {
                flow[p * m + (v - n)] += bottleneck;
            } else {
                let cell = &mut flow[v * m + (p - n)];
                *cell -= bottleneck;
                if *cell < MASS_TOL * 1e-2 {
                    *cell = 0.0;
                }
            }
            v = p;
        }
        excess[v] -= bottleneck;
        deficit[t - n] -= bottleneck;
        for (p, d) in pot.iter_mut().zip(&dist) {
            *p += d.min(dt);
        }
        augmentations += 1;
        if augmentations > 50 * (n + m) * (n + m) {
            return Err(LabError::Lp("augmentation limit exceeded".into()));
        }
    }

    let primal = crate::stats::compensated_sum(flow.iter().zip(cost).map(|(f, c)| f * c));
    // α_i = −π_i, β_j = min_i (c_ij − α_i) is feasible by construction
    let alpha: Vec<f64> = (0..n).map(|i| -pot[i]).collect();
    let beta: Vec<f64> = (0..m)
        .map(|j| (0..n).map(|i| cost[i * m + j] - alpha[i]).fold(f64::INFINITY, f64::min))
        .collect();
    let dual = crate::stats::compensated_sum(
        a.iter().zip(&alpha).map(|(w, v)| w * v).chain(b.iter().zip(&beta).map(|(w, v)| w * v)),
    );
    Ok(TransportSolution {
        plan: flow,
        cost: primal,
        dual_cost: dual,
        augmentations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Brute force over permutation plans, valid for uniform square problems.
    fn assignment_brute_force(cost: &[f64], n: usize) -> f64 {
        fn rec(cost: &[f64], n: usize, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == n {
                *best = best.min(acc);
                return;
            }
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    rec(cost, n, row + 1, used, acc + cost[row * n + j], best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(cost, n, 0, &mut vec![false; n], 0.0, &mut best);
        best / n as f64
    }

    #[test]
    fn matches_assignment_enumeration() {
        let mut g = crate::rng::stream(5, 1);
        for _ in 0..40 {
            let n = g.random_range(1..6);
            let cost: Vec<f64> = (0..n * n).map(|_| g.random_range(0.0..3.0)).collect();
            let w = vec![1.0 / n as f64; n];
            let sol = solve_transport(&w, &w, &cost).unwrap();
            let brute = assignment_brute_force(&cost, n);
            assert!((sol.cost - brute).abs() < 1e-12, "{} vs {brute}", sol.cost);
            assert!(sol.duality_gap().abs() < 1e-12);
        }
    }

    #[test]
    fn marginals_hold_for_unequal_sizes() {
        let mut g = crate::rng::stream(6, 1);
        for _ in 0..40 {
            let n = g.random_range(1..9);
            let m = g.random_range(1..9);
            let mut a: Vec<f64> = (0..n).map(|_| g.random_range(0.0..1.0)).collect();
            let mut b: Vec<f64> = (0..m).map(|_| g.random_range(0.0..1.0)).collect();
            let sa: f64 = a.iter().sum();
            let sb: f64 = b.iter().sum();
            a.iter_mut().for_each(|v| *v /= sa);
            b.iter_mut().for_each(|v| *v /= sb);
            let cost: Vec<f64> = (0..n * m).map(|_| g.random_range(0.0..5.0)).collect();
            let sol = solve_transport(&a, &b, &cost).unwrap();
            for i in 0..n {
                let s: f64 = (0..m).map(|j| sol.plan[i * m + j]).sum();
                assert!((s - a[i]).abs() < 1e-12);
            }
            for j in 0..m {
                let s: f64 = (0..n).map(|i| sol.plan[i * m + j]).sum();
                assert!((s - b[j]).abs() < 1e-12);
            }
            assert!(sol.plan.iter().all(|v| *v >= 0.0));
            assert!(sol.duality_gap() > -1e-12 && sol.duality_gap() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_costs() {
        assert!(solve_transport(&[1.0], &[1.0], &[-1.0]).is_err());
        assert!(solve_transport(&[1.0], &[1.0], &[]).is_err());
    }
}
