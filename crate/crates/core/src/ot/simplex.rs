//! Revised simplex for `min cᵀx subject to Ax = b, x ≥ 0` with sparse
//! columns and a dense explicit basis inverse.
//!
//! Two phases with one artificial per row. Pricing is Dantzig's rule,
//! falling back to Bland's rule after a run of degenerate pivots. The basis
//! inverse is rebuilt from scratch every [`REFACTOR_EVERY`] pivots.

use nalgebra::DMatrix;

use crate::error::{LabError, Result};

const REFACTOR_EVERY: usize = 64;
const PIVOT_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct StandardLp {
    pub rows: usize,
    /// Sparse columns as `(row, value)` pairs.
    pub columns: Vec<Vec<(usize, f64)>>,
    pub cost: Vec<f64>,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Simplex multipliers `y = c_Bᵀ B⁻¹`, an optimal solution of
    /// `max bᵀy subject to Aᵀy ≤ c`.
    pub duals: Vec<f64>,
    pub pivots: usize,
}

struct Tableau<'a> {
    lp: &'a StandardLp,
    m: usize,
    n: usize,
    art_sign: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    pivots: usize,
    since_refactor: usize,
}

impl<'a> Tableau<'a> {
    fn column(&self, j: usize) -> Vec<(usize, f64)> {
        if j < self.n {
            self.lp.columns[j].clone()
        } else {
            let r = j - self.n;
            vec![(r, self.art_sign[r])]
        }
    }

    fn duals(&self, cost: &dyn Fn(usize) -> f64) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for p in 0..m {
            let cb = cost(self.basis[p]);
            if cb != 0.0 {
                let row = &self.binv[p * m..(p + 1) * m];
                for (yr, b) in y.iter_mut().zip(row) {
                    *yr += cb * b;
                }
            }
        }
        y
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut bmat = DMatrix::<f64>::zeros(m, m);
        for (p, &j) in self.basis.iter().enumerate() {
            for (r, v) in self.column(j) {
                bmat[(r, p)] = v;
            }
        }
        let inv = bmat
            .try_inverse()
            .ok_or_else(|| LabError::Lp("basis became singular".into()))?;
        for p in 0..m {
            for r in 0..m {
                self.binv[p * m + r] = inv[(p, r)];
            }
        }
        for p in 0..m {
            let row = &self.binv[p * m..(p + 1) * m];
            let v: f64 = row.iter().zip(&self.lp.rhs).map(|(a, b)| a * b).sum();
            self.xb[p] = if v < 0.0 && v > -1e-11 { 0.0 } else { v };
        }
        self.since_refactor = 0;
        Ok(())
    }

    fn pivot(&mut self, p: usize, j: usize, u: &[f64]) {
        let m = self.m;
        let theta = self.xb[p] / u[p];
        for q in 0..m {
            if q != p {
                self.xb[q] -= theta * u[q];
                if self.xb[q] < 0.0 && self.xb[q] > -1e-12 {
                    self.xb[q] = 0.0;
                }
            }
        }
        self.xb[p] = theta;
        let inv_piv = 1.0 / u[p];
        let (before, rest) = self.binv.split_at_mut(p * m);
        let (prow, after) = rest.split_at_mut(m);
        prow.iter_mut().for_each(|v| *v *= inv_piv);
        for (q, row) in before.chunks_exact_mut(m).enumerate() {
            let f = u[q];
            if f != 0.0 {
                row.iter_mut().zip(prow.iter()).for_each(|(a, b)| *a -= f * b);
            }
        }
        for (k, row) in after.chunks_exact_mut(m).enumerate() {
            let f = u[p + 1 + k];
            if f != 0.0 {
                row.iter_mut().zip(prow.iter()).for_each(|(a, b)| *a -= f * b);
            }
        }
        self.in_basis[self.basis[p]] = false;
        self.in_basis[j] = true;
        self.basis[p] = j;
        self.pivots += 1;
        self.since_refactor += 1;
    }

    fn direction(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let col = self.column(j);
        (0..m)
            .map(|p| col.iter().map(|&(r, v)| self.binv[p * m + r] * v).sum())
            .collect()
    }

    /// Runs simplex iterations with the given cost until optimal.
    fn optimise(&mut self, cost: &dyn Fn(usize) -> f64, structural_only: bool) -> Result<()> {
        let limit = 200 * (self.m + self.n) + 1000;
        let scale = (0..self.n).map(|j| cost(j).abs()).fold(1.0, f64::max);
        let price_tol = 1e-12 * scale;
        let mut degenerate_run = 0usize;
        let candidates = if structural_only { self.n } else { self.n + self.m };
        for _ in 0..limit {
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
            let y = self.duals(cost);
            let bland = degenerate_run > 2 * self.m + 10;
            let mut entering = None;
            let mut best = -price_tol;
            for j in 0..candidates {
                if self.in_basis[j] {
                    continue;
                }
                let d = cost(j) - self.column_dot(j, &y);
                if d < best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(j) = entering else {
                return Ok(());
            };
            let u = self.direction(j);
            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for p in 0..self.m {
                if u[p] > PIVOT_TOL {
                    let ratio = self.xb[p].max(0.0) / u[p];
                    let better = match leave {
                        None => true,
                        Some(q) => {
                            if ratio < best_ratio - 1e-12 {
                                true
                            } else if ratio <= best_ratio + 1e-12 {
                                if bland {
                                    self.basis[p] < self.basis[q]
                                } else {
                                    u[p] > u[q]
                                }
                            } else {
                                false
                            }
                        }
                    };
                    if better {
                        leave = Some(p);
                        best_ratio = best_ratio.min(ratio);
                    }
                }
            }
            let Some(p) = leave else {
                return Err(LabError::Lp("objective is unbounded".into()));
            };
            if best_ratio <= 1e-14 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(p, j, &u);
        }
        Err(LabError::Lp("iteration limit reached".into()))
    }

    fn column_dot(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            self.lp.columns[j].iter().map(|&(r, v)| y[r] * v).sum()
        } else {
            let r = j - self.n;
            y[r] * self.art_sign[r]
        }
    }
}

pub fn solve(lp: &StandardLp) -> Result<LpSolution> {
    let m = lp.rows;
    let n = lp.columns.len();
    if lp.cost.len() != n || lp.rhs.len() != m {
        return Err(LabError::Lp("cost/rhs lengths do not match the constraint matrix".into()));
    }
    if lp.columns.iter().flatten().any(|&(r, v)| r >= m || !v.is_finite()) {
        return Err(LabError::Lp("column entry out of range or non-finite".into()));
    }
    let art_sign: Vec<f64> = lp.rhs.iter().map(|b| if *b >= 0.0 { 1.0 } else { -1.0 }).collect();
    let mut binv = vec![0.0; m * m];
    for r in 0..m {
        binv[r * m + r] = art_sign[r];
    }
    let mut in_basis = vec![false; n + m];
    in_basis[n..].iter_mut().for_each(|v| *v = true);
    let mut t = Tableau {
        lp,
        m,
        n,
        basis: (n..n + m).collect(),
        in_basis,
        binv,
        xb: lp.rhs.iter().map(|b| b.abs()).collect(),
        art_sign,
        pivots: 0,
        since_refactor: 0,
    };

    let phase_one = |j: usize| if j >= n { 1.0 } else { 0.0 };
    t.optimise(&phase_one, true)?;
    let infeasibility: f64 = t
        .basis
        .iter()
        .zip(&t.xb)
        .filter(|(j, _)| **j >= n)
        .map(|(_, x)| *x)
        .sum();
    let rhs_scale = lp.rhs.iter().fold(1.0, |a: f64, b| a.max(b.abs()));
    if infeasibility > 1e-9 * rhs_scale {
        return Err(LabError::Lp(format!("infeasible (phase-one residual {infeasibility:.3e})")));
    }
    // drive remaining artificials out of the basis
    for p in 0..m {
        if t.basis[p] < n {
            continue;
        }
        let row: Vec<f64> = t.binv[p * m..(p + 1) * m].to_vec();
        let candidate = (0..n).filter(|&j| !t.in_basis[j]).find(|&j| {
            let v: f64 = lp.columns[j].iter().map(|&(r, a)| row[r] * a).sum();
            v.abs() > 1e-7
        });
        if let Some(j) = candidate {
            let u = t.direction(j);
            t.pivot(p, j, &u);
        }
    }
    t.refactor()?;

    let phase_two = |j: usize| if j < n { lp.cost[j] } else { 0.0 };
    t.optimise(&phase_two, true)?;
    t.refactor()?;

    let mut x = vec![0.0; n];
    for (p, &j) in t.basis.iter().enumerate() {
        if j < n {
            x[j] = t.xb[p].max(0.0);
        }
    }
    let objective = crate::stats::compensated_sum(x.iter().zip(&lp.cost).map(|(a, c)| a * c));
    let duals = t.duals(&phase_two);
    Ok(LpSolution {
        x,
        objective,
        duals,
        pivots: t.pivots,
    })
}
