//! One worker against the full pool on the three hot loops. Build with
//! `--no-default-features` to time the sequential fallback itself.

use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mkvlab::coefficients::{AffineField, CoefficientField, FieldSpec};
use mkvlab::distances::w_psi_primal;
use mkvlab::mkv::particle_simulate;
use mkvlab::par::{num_threads, with_threads};
use mkvlab::rng::stream;
use mkvlab::sde::{euler_maruyama, DiffusionSpec, InitialLaw, SimulationOptions};
use mkvlab::{EmpiricalMeasure, PsiModulus};
use rand::Rng;

/// With a single hardware thread both entries run on one worker.
fn schedules() -> [(&'static str, usize); 2] {
    [("sequential", 1), ("parallel", num_threads().max(1))]
}

fn euler_maruyama_ensemble(c: &mut Criterion) {
    let field: Arc<dyn CoefficientField> = Arc::new(AffineField::ornstein_uhlenbeck(2, 1.0, 1.0).unwrap());
    let spec = DiffusionSpec::new(field, 0.0, 1.0).unwrap();
    let init = InitialLaw::point(&[0.0, 0.0]);
    let opts = SimulationOptions::new(20_000, 100, 1).with_record_stride(100);
    let mut group = c.benchmark_group("euler_maruyama_20k_paths");
    group.sample_size(10);
    for (label, threads) in schedules() {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| with_threads(threads, || black_box(euler_maruyama(&spec, &init, opts).unwrap())))
        });
    }
    group.finish();
}

fn particle_system(c: &mut Criterion) {
    let field = FieldSpec::MeanFieldOu { dim: 1 }.build().unwrap();
    let spec = DiffusionSpec::new(field, 0.0, 1.0).unwrap();
    let init = InitialLaw::point(&[0.5]);
    let opts = SimulationOptions::new(10_000, 50, 2).with_record_stride(50);
    let mut group = c.benchmark_group("particle_system_10k");
    group.sample_size(10);
    for (label, threads) in schedules() {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| with_threads(threads, || black_box(particle_simulate(&spec, &init, opts).unwrap())))
        });
    }
    group.finish();
}

fn w_psi_batch(c: &mut Criterion) {
    let mut g = stream(3, 0);
    let mut cloud = |n: usize| {
        let pts: Vec<f64> = (0..2 * n).map(|_| g.random_range(-1.0..1.0)).collect();
        EmpiricalMeasure::uniform(2, pts).unwrap()
    };
    let pairs: Vec<(EmpiricalMeasure, EmpiricalMeasure)> = (0..32).map(|_| (cloud(60), cloud(60))).collect();
    let psi = PsiModulus::power(0.5).unwrap();
    let mut group = c.benchmark_group("w_psi_32_pairs");
    group.sample_size(10);
    for (label, threads) in schedules() {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| {
                with_threads(threads, || {
                    black_box(mkvlab::par::map_slice(&pairs, |(a, b)| w_psi_primal(a, b, &psi).unwrap().value))
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, euler_maruyama_ensemble, particle_system, w_psi_batch);
criterion_main!(benches);
