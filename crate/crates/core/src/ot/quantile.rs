//! Monotone (quantile) coupling on the real line. For costs `|x − y|^k`
//! with `k ≥ 1` it is optimal for arbitrary weights.

/// `Σ π_ij |x_i − y_j|^k` under the monotone coupling of `(xs, a)` and
/// `(ys, b)`.
pub fn monotone_cost(xs: &[f64], a: &[f64], ys: &[f64], b: &[f64], k: f64) -> f64 {
    let mut ox: Vec<usize> = (0..xs.len()).collect();
    let mut oy: Vec<usize> = (0..ys.len()).collect();
    ox.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    oy.sort_by(|&i, &j| ys[i].total_cmp(&ys[j]));
    let (mut i, mut j) = (0usize, 0usize);
    let (mut ra, mut rb) = (a[ox[0]], b[oy[0]]);
    let mut terms = Vec::with_capacity(xs.len() + ys.len());
    loop {
        let mass = ra.min(rb);
        let gap = (xs[ox[i]] - ys[oy[j]]).abs();
        let c = if k == 1.0 {
            gap
        } else if k == 2.0 {
            gap * gap
        } else {
            gap.powf(k)
        };
        terms.push(mass * c);
        ra -= mass;
        rb -= mass;
        let advance_x = ra <= rb;
        if advance_x {
            i += 1;
            if i == xs.len() {
                break;
            }
            ra = a[ox[i]];
        } else {
            j += 1;
            if j == ys.len() {
                break;
            }
            rb = b[oy[j]];
        }
    }
    crate::stats::compensated_sum(terms)
}

/// Fast path for equal-size uniform samples: sorted pairing.
pub fn sorted_uniform_cost(xs: &[f64], ys: &[f64], k: f64) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    let mut x = xs.to_vec();
    let mut y = ys.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    crate::stats::compensated_sum(x.iter().zip(&y).map(|(a, b)| {
        let g = (a - b).abs();
        if k == 2.0 {
            g * g
        } else {
            g.powf(k)
        }
    })) / n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_of_uniform_sample() {
        let xs = [0.3, -1.0, 2.0, 0.0];
        let ys: Vec<f64> = xs.iter().map(|v| v + 0.25).collect();
        let w = [0.25; 4];
        assert!((monotone_cost(&xs, &w, &ys, &w, 2.0) - 0.0625).abs() < 1e-15);
        assert!((sorted_uniform_cost(&xs, &ys, 1.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn unequal_weights() {
        // ½δ₀ + ½δ₂ against δ₁: every unit of mass moves distance 1
        assert!((monotone_cost(&[0.0, 2.0], &[0.5, 0.5], &[1.0], &[1.0], 2.0) - 1.0).abs() < 1e-15);
        // δ₀ against ¼δ₁ + ¾δ₃
        let c = monotone_cost(&[0.0], &[1.0], &[3.0, 1.0], &[0.75, 0.25], 1.0);
        assert!((c - 2.5).abs() < 1e-15);
    }
}
