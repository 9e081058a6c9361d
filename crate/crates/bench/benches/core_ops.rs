use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use nalgebra::DVector;
use std::hint::black_box;

use kulsif::condlab::{hessian_build, HessianKind};
use kulsif::estimators::{kulsif_fit_direct, RkulsifObjective};
use kulsif::kernel::{gram_blocks, median_heuristic};
use kulsif::linalg::{solve_spd, spectral_summary};
use kulsif::modelsel::loocv_analytic;
use kulsif::optimizer::{bfgs_minimize, OptimizerConfig};
use kulsif::KernelSpec;
use kulsif_bench::{bench_blocks, bench_pair};

fn gram(c: &mut Criterion) {
    let (x, y) = bench_pair(1, 200, 200);
    let spec = KernelSpec::gaussian(2.0).unwrap();
    c.bench_function("gram_blocks_200", |b| {
        b.iter(|| gram_blocks(&spec, black_box(&x), black_box(&y)).unwrap())
    });
    c.bench_function("median_heuristic_200", |b| {
        b.iter(|| median_heuristic(black_box(&x)).unwrap())
    });
}

fn solve_and_fit(c: &mut Criterion) {
    let blocks = bench_blocks(2, 200, 200, 2.0);
    let lambda = (200f64).powf(-0.9);
    c.bench_function("kulsif_fit_direct_200", |b| {
        b.iter(|| kulsif_fit_direct(black_box(&blocks), lambda).unwrap())
    });
    let mut reg = blocks.k11().clone();
    for i in 0..200 {
        reg[(i, i)] += 200.0 * lambda;
    }
    let rhs = DVector::from_element(200, 1.0);
    c.bench_function("solve_spd_200", |b| {
        b.iter(|| solve_spd(black_box(&reg), black_box(&rhs)).unwrap())
    });
}

fn spectral(c: &mut Criterion) {
    let blocks = bench_blocks(3, 200, 200, 2.0);
    let lambda = (200f64).powf(-0.9);
    let h = hessian_build(&HessianKind::Kulsif, blocks.k11(), lambda, None).unwrap();
    c.bench_function("spectral_summary_200", |b| {
        b.iter(|| spectral_summary(black_box(&h)).unwrap())
    });
}

fn loocv(c: &mut Criterion) {
    let blocks = bench_blocks(4, 100, 100, 2.0);
    c.bench_function("loocv_analytic_100", |b| {
        b.iter(|| loocv_analytic(black_box(&blocks), 0.05).unwrap())
    });
}

fn bfgs(c: &mut Criterion) {
    let blocks = bench_blocks(5, 100, 100, 2.0);
    let lambda = (100f64).powf(-0.9);
    let obj = RkulsifObjective::new(blocks, lambda).unwrap();
    let cfg = OptimizerConfig::default();
    c.bench_function("bfgs_rkulsif_100", |b| {
        b.iter_batched(
            || DVector::zeros(100),
            |x0| bfgs_minimize(black_box(&obj), &x0, &cfg).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, gram, solve_and_fit, spectral, loocv, bfgs);
criterion_main!(benches);
