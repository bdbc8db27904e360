use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lago_bench::{bounds, cubic_cost, linear_cost, logit_trial};
use lago_core::{
    confidence_set, fit_gee, recommend_grid, recommend_linear, CenterCovariates, LinkFunction, TargetSpec,
};
use std::hint::black_box;

fn fitting(c: &mut Criterion) {
    let mut g = c.benchmark_group("fit_gee");
    for centers in [16, 64, 256] {
        let data = logit_trial(centers, 150, 1);
        g.bench_with_input(BenchmarkId::from_parameter(data.n_total()), &data, |b, d| {
            b.iter(|| fit_gee(black_box(d), LinkFunction::Logit).unwrap())
        });
    }
    g.finish();
}

fn recommending(c: &mut Criterion) {
    let fit = fit_gee(&logit_trial(16, 150, 2), LinkFunction::Logit).unwrap();
    let z = CenterCovariates(vec![1.75]);
    let target = TargetSpec { theta: 0.8 };
    let (b, lin, cub) = (bounds(), linear_cost(), cubic_cost());
    c.bench_function("recommend_linear", |bn| {
        bn.iter(|| recommend_linear(&fit.beta_hat, &z, &b, &lin, &target, fit.link).unwrap())
    });
    let mut g = c.benchmark_group("recommend_grid_cubic");
    g.sample_size(20);
    for inc in [0.1, 0.01] {
        g.bench_with_input(BenchmarkId::from_parameter(inc), &inc, |bn, &inc| {
            bn.iter(|| recommend_grid(&fit.beta_hat, &z, &b, &cub, &target, fit.link, inc).unwrap())
        });
    }
    g.finish();
}

fn confidence_sets(c: &mut Criterion) {
    let fit = fit_gee(&logit_trial(16, 150, 3), LinkFunction::Logit).unwrap();
    let z = CenterCovariates(vec![1.75]);
    let target = TargetSpec { theta: 0.8 };
    let b = bounds();
    let mut g = c.benchmark_group("confidence_set");
    g.sample_size(20);
    for inc in [0.1, 0.05] {
        g.bench_with_input(BenchmarkId::from_parameter(inc), &inc, |bn, &inc| {
            bn.iter(|| confidence_set(&fit, &b, &z, &target, inc).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, fitting, recommending, confidence_sets);
criterion_main!(benches);
