use std::sync::Arc;

use mkvlab::coefficients::{assemble_exa, CoefficientField, ExaKernels, FieldSpec, InteractionKernel, NoiseKernel};
use mkvlab::mkv::{picard_solve, PicardOptions, RhoOptions};
use mkvlab::sde::{DiffusionSpec, InitialLaw};
use mkvlab::{EmpiricalMeasure, PsiModulus};

fn options(lambda: f64, tol: f64, max_iter: usize) -> PicardOptions {
    PicardOptions::new(lambda, tol, max_iter, RhoOptions::new(PsiModulus::linear(), 2.0))
}

#[test]
fn contraction_verdict_is_seed_invariant() {
    let field = FieldSpec::MeanFieldOu { dim: 1 }.build().unwrap();
    let spec = DiffusionSpec::new(field, 0.0, 1.0).unwrap();
    let init = InitialLaw::measure(EmpiricalMeasure::uniform(1, vec![-1.0, 0.5, 2.0]).unwrap());
    let verdicts: Vec<(bool, bool)> = (0..3)
        .map(|seed| {
            let s = picard_solve(&spec, &init, 3000, 100, seed, &options(10.0, 1e-2, 10)).unwrap();
            (s.converged, s.non_contraction)
        })
        .collect();
    assert!(verdicts.iter().all(|v| *v == (true, false)), "{verdicts:?}");
}

#[test]
fn singular_kernel_field_contracts_faster_for_larger_lambda() {
    let kernels = ExaKernels {
        dim: 1,
        lambda: 2.0,
        b_tilde: InteractionKernel::PsiOdd { scale: 0.8 },
        sigma_tilde: NoiseKernel::PsiBounded { scale: 0.6 },
        lipschitz: 1.0,
        psi: PsiModulus::power(0.5).unwrap(),
        ..ExaKernels::mean_field_ou(1)
    };
    let field: Arc<dyn CoefficientField> = Arc::new(assemble_exa(kernels).unwrap());
    let spec = DiffusionSpec::new(field, 0.0, 1.0).unwrap();
    let init = InitialLaw::measure(EmpiricalMeasure::uniform(1, vec![-1.0, 0.0, 1.5]).unwrap());
    let mut opts = options(10.0, 1e-4, 6);
    opts.lambda_sweep = vec![0.0, 5.0, 20.0, 50.0];
    let state = picard_solve(&spec, &init, 2000, 50, 3, &opts).unwrap();
    let rho = state.rho_history();
    assert!(rho.windows(2).all(|w| w[1] < w[0]), "{rho:?}");
    let first_ratio = |row: usize| state.sweep[row].ratios[1].unwrap();
    let ratios: Vec<f64> = (0..4).map(first_ratio).collect();
    assert!(ratios.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{ratios:?}");
    assert!(ratios[3] < 1.0);
}
