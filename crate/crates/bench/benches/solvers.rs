use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lassokit::compat::{compatibility_constant, theoretical_lambda, CompatSettings};
use lassokit::inference::{default_nodewise_lambda, graphical_lasso, nodewise_sqrt_lasso};
use lassokit::linalg::{gram, IndexSet};
use lassokit::solvers::{solve_lasso, solve_scaled_lasso, solve_sqrt_lasso};
use lassokit_bench::{design, regression};

fn lasso_family(c: &mut Criterion) {
    let mut group = c.benchmark_group("lasso");
    for (n, p) in [(50, 100), (100, 400)] {
        let data = regression(n, p, 1);
        let lambda = theoretical_lambda(n, p, 1.0).unwrap();
        group.bench_with_input(BenchmarkId::new("lasso", p), &data, |b, d| b.iter(|| solve_lasso(d, 2.0 * lambda).unwrap()));
        group.bench_with_input(BenchmarkId::new("sqrt", p), &data, |b, d| b.iter(|| solve_sqrt_lasso(d, lambda).unwrap()));
        group.bench_with_input(BenchmarkId::new("scaled", p), &data, |b, d| b.iter(|| solve_scaled_lasso(d, lambda).unwrap()));
    }
    group.finish();
}

fn inverses(c: &mut Criterion) {
    let mut group = c.benchmark_group("inverse");
    group.sample_size(10);
    let x = design(100, 50, 2);
    let lambda = default_nodewise_lambda(100, 50);
    group.bench_function("nodewise-p50", |b| b.iter(|| nodewise_sqrt_lasso(&x, lambda).unwrap()));
    let sigma = gram(&design(50, 20, 3)).unwrap();
    group.bench_function("graphical-p20", |b| b.iter(|| graphical_lasso(&sigma, 0.1).unwrap()));
    group.finish();
}

fn compatibility(c: &mut Criterion) {
    let g = gram(&design(20, 6, 4)).unwrap();
    let s = IndexSet::new([0, 1], 6).unwrap();
    let settings = CompatSettings::default();
    c.bench_function("compat-p6-s2", |b| b.iter(|| compatibility_constant(&g, 1.0, &s, &settings).unwrap()));
}

criterion_group!(benches, lasso_family, inverses, compatibility);
criterion_main!(benches);
