use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use specshare::iterative::run_alg2;
use specshare::stackelberg::{solve_leader, SearchSpec};
use specshare::subgame::solve_ne;
use specshare::waterfill::waterfill;
use specshare::{solve_symmetric, IterationSchedule, NeOptions};
use specshare_bench::{symmetric_instance, weak_instance};

fn bench_waterfill(c: &mut Criterion) {
    let mut group = c.benchmark_group("waterfill");
    for n in [4usize, 64, 1024] {
        let sigma: Vec<f64> = (0..n).map(|f| 0.1 + ((f * 37) % 101) as f64 / 25.0).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &sigma, |b, s| {
            b.iter(|| waterfill(black_box(s), black_box(n as f64 * 0.5)).unwrap())
        });
    }
    group.finish();
}

fn bench_ne(c: &mut Criterion) {
    let (config, g, start) = symmetric_instance();
    c.bench_function("closed_form_ne", |b| {
        b.iter(|| solve_symmetric(black_box(&start), &g, &config, 1e-9).unwrap())
    });
    c.bench_function("solve_ne/symmetric", |b| {
        b.iter(|| solve_ne(black_box(&start), &g, &config, &NeOptions::default()).unwrap())
    });
    let (config, g, start) = weak_instance(6, 16);
    c.bench_function("solve_ne/6su_16sub", |b| {
        b.iter(|| solve_ne(black_box(&start), &g, &config, &NeOptions::default()).unwrap())
    });
}

fn bench_hierarchy(c: &mut Criterion) {
    let (config, g, _) = symmetric_instance();
    let schedule = IterationSchedule::default();
    c.bench_function("alg2/symmetric", |b| b.iter(|| run_alg2(black_box(&g), &config, &schedule).unwrap()));
    let spec = SearchSpec {
        restarts: 4,
        ..SearchSpec::default()
    };
    let mut group = c.benchmark_group("leader");
    group.sample_size(10);
    group.bench_function("solve_leader/4_restarts", |b| {
        b.iter(|| solve_leader(black_box(&g), &config, &spec).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_waterfill, bench_ne, bench_hierarchy);
criterion_main!(benches);
