use mkvlab::coefficients::{m0_bisection, m0_closed_form, scr_k_membership};
use mkvlab::distances::{
    gaussian_kl, gaussian_w2, smoothing_bound, total_variation, w_psi_dual, w_psi_primal, wasserstein_k, TvMode, WkMethod,
};
use mkvlab::mkv::{rho_lambda, MeasureFlow, RhoOptions};
use mkvlab::{EmpiricalMeasure, PsiModulus};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn measure(dim: usize) -> impl Strategy<Value = EmpiricalMeasure> {
    (1usize..=6).prop_flat_map(move |n| {
        (
            prop::collection::vec(-4i32..=4, n * dim),
            prop::collection::vec(0.05f64..1.0, n),
        )
            .prop_map(move |(lattice, w)| {
                let total: f64 = w.iter().sum();
                let points = lattice.into_iter().map(|v| v as f64 * 0.5).collect();
                EmpiricalMeasure::new(dim, points, w.into_iter().map(|x| x / total).collect()).unwrap()
            })
    })
}

fn pair() -> impl Strategy<Value = (EmpiricalMeasure, EmpiricalMeasure)> {
    (1usize..=3).prop_flat_map(|d| (measure(d), measure(d)))
}

fn triple() -> impl Strategy<Value = (EmpiricalMeasure, EmpiricalMeasure, EmpiricalMeasure)> {
    (1usize..=3).prop_flat_map(|d| (measure(d), measure(d), measure(d)))
}

fn psi() -> impl Strategy<Value = PsiModulus> {
    prop_oneof![
        Just(PsiModulus::linear()),
        (0.1f64..1.0).prop_map(|a| PsiModulus::power(a).unwrap()),
        (0.5f64..3.0).prop_map(|c| PsiModulus::constant(c).unwrap()),
        (0.5f64..2.0).prop_map(|b| PsiModulus::log_reciprocal(b).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn primal_and_dual_transport_agree((mu, nu) in pair(), psi in psi()) {
        let p = w_psi_primal(&mu, &nu, &psi).unwrap().value;
        let d = w_psi_dual(&mu, &nu, &psi).unwrap().value;
        prop_assert!((p - d).abs() < 1e-8, "primal {p} dual {d}");
    }

    #[test]
    fn wasserstein_is_a_metric((a, b, c) in triple(), k in prop_oneof![Just(1.0), Just(2.0), 1.0f64..4.0]) {
        let w = |x: &EmpiricalMeasure, y: &EmpiricalMeasure| wasserstein_k(x, y, k, WkMethod::ExactLp).unwrap().value;
        prop_assert!(w(&a, &a) < 1e-9);
        prop_assert!((w(&a, &b) - w(&b, &a)).abs() < 1e-9);
        prop_assert!(w(&a, &c) <= w(&a, &b) + w(&b, &c) + 1e-8);
    }

    #[test]
    fn psi_transport_is_a_metric((a, b, c) in triple(), psi in psi()) {
        let w = |x: &EmpiricalMeasure, y: &EmpiricalMeasure| w_psi_primal(x, y, &psi).unwrap().value;
        prop_assert!((w(&a, &b) - w(&b, &a)).abs() < 1e-9);
        prop_assert!(w(&a, &c) <= w(&a, &b) + w(&b, &c) + 1e-8);
    }

    #[test]
    fn monotone_coupling_is_optimal_in_one_dimension(a in measure(1), b in measure(1), k in 1.0f64..4.0) {
        let lp = wasserstein_k(&a, &b, k, WkMethod::ExactLp).unwrap().value;
        let q = wasserstein_k(&a, &b, k, WkMethod::Quantile1d).unwrap().value;
        prop_assert!((lp - q).abs() < 1e-9);
    }

    #[test]
    fn psi_transport_degenerations((mu, nu) in pair()) {
        let w1 = wasserstein_k(&mu, &nu, 1.0, WkMethod::ExactLp).unwrap().value;
        let tv = total_variation(&mu, &nu, TvMode::Atomic).unwrap().value;
        prop_assert!((w_psi_primal(&mu, &nu, &PsiModulus::linear()).unwrap().value - w1).abs() < 1e-8);
        prop_assert!((w_psi_primal(&mu, &nu, &PsiModulus::constant(2.0).unwrap()).unwrap().value - tv).abs() < 1e-8);
        prop_assert!(tv <= 2.0 + 1e-12);
    }

    #[test]
    fn dirac_pairs(x in prop::collection::vec(-3.0f64..3.0, 2), y in prop::collection::vec(-3.0f64..3.0, 2), psi in psi()) {
        let r = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
        let got = w_psi_primal(&EmpiricalMeasure::dirac(&x), &EmpiricalMeasure::dirac(&y), &psi).unwrap().value;
        let expected = if r > 0.0 { psi.at(r) } else { 0.0 };
        prop_assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn translation_moves_wasserstein_by_the_shift(a in measure(2), s in prop::collection::vec(-2.0f64..2.0, 2), k in 1.0f64..3.0) {
        let b = a.shifted(&s).unwrap();
        let w = wasserstein_k(&a, &b, k, WkMethod::ExactLp).unwrap().value;
        prop_assert!((w - (s[0] * s[0] + s[1] * s[1]).sqrt()).abs() < 1e-8);
    }

    #[test]
    fn smoothing_bound_holds((mu, nu) in pair(), psi in psi()) {
        let grid: Vec<f64> = (0..17).map(|j| 10f64.powf(-4.0 + j as f64 / 4.0)).collect();
        let b = smoothing_bound(&mu, &nu, &psi, &grid, TvMode::Atomic).unwrap();
        prop_assert!(b.lhs <= b.min_rhs + 1e-8);
    }

    #[test]
    fn critical_exponent_closed_form(p in 2.0f64..80.0, q in 2.0f64..80.0, d in 1usize..6) {
        prop_assume!(scr_k_membership(p, q, d));
        let m = m0_closed_form(p, q, d);
        prop_assert!(m > 1.0 && m < 2.0);
        prop_assert!((m - m0_bisection(p, q, d)).abs() < 1e-9);
    }

    #[test]
    fn gaussian_formulas(m1 in -2.0f64..2.0, m2 in -2.0f64..2.0, v1 in 0.1f64..3.0, v2 in 0.1f64..3.0) {
        let c = |v: f64| DMatrix::from_element(1, 1, v);
        let w = gaussian_w2(&[m1], &c(v1), &[m2], &c(v2)).unwrap();
        let exact = ((m1 - m2).powi(2) + (v1.sqrt() - v2.sqrt()).powi(2)).sqrt();
        prop_assert!((w - exact).abs() < 1e-9);
        let kl = gaussian_kl(&[m1], &c(v1), &[m2], &c(v2)).unwrap();
        let exact = 0.5 * (v1 / v2 + (m1 - m2).powi(2) / v2 - 1.0 + (v2 / v1).ln());
        prop_assert!((kl - exact).abs() < 1e-9 && kl >= -1e-12);
    }

    #[test]
    fn rho_discounts_monotonically(a in prop::collection::vec(measure(1), 3), b in prop::collection::vec(measure(1), 3), l1 in 0.0f64..5.0, l2 in 0.0f64..5.0) {
        let times = vec![0.0, 0.5, 1.0];
        let f = MeasureFlow::new(times.clone(), a).unwrap();
        let g = MeasureFlow::new(times, b).unwrap();
        let opts = RhoOptions::new(PsiModulus::power(0.5).unwrap(), 2.0);
        let (lo, hi) = (l1.min(l2), l1.max(l2));
        prop_assert!(rho_lambda(&f, &g, hi, &opts).unwrap().value <= rho_lambda(&f, &g, lo, &opts).unwrap().value + 1e-12);
    }

    #[test]
    fn measure_csv_round_trip(m in measure(3)) {
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        prop_assert_eq!(EmpiricalMeasure::read_csv(&buf[..]).unwrap(), m);
    }
}
