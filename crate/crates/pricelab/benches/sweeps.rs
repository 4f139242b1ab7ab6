use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use num_complex::Complex64 as C;
use pricelab::conormal::le_ratio_sweep;
use pricelab::model::ReducedOperator;
use pricelab::resolvent::{geometric, sample_resolvent, SolverOptions};
use pricelab::Exec;
use std::hint::black_box;

fn source(r: f64) -> C {
    let z = r / 2.0;
    if z >= 1.0 {
        C::new(0.0, 0.0)
    } else {
        C::new((1.0 - 1.0 / (1.0 - z * z)).exp(), 0.0)
    }
}

fn resolvent_sweep(c: &mut Criterion) {
    let op = ReducedOperator::potential(2.5, 1.0).unwrap();
    let opts = SolverOptions::default();
    let sigmas = geometric(1e-3, 0.5, 32);
    let mut g = c.benchmark_group("resolvent-sweep");
    g.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| sample_resolvent(&op, &source, 0, black_box(&sigmas), 1.0, &opts, exec).unwrap())
        });
    }
    g.finish();
}

fn le_sweep(c: &mut Criterion) {
    let op = ReducedOperator::flat();
    let opts = SolverOptions { dx: 0.01, ..SolverOptions::default() };
    let g0 = |r: f64| (-(r - 2.0).powi(2)).exp();
    let sigmas: Vec<f64> = (0..=12).map(|k| 0.25 * k as f64).collect();
    let mut g = c.benchmark_group("le-ratio-sweep");
    g.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| le_ratio_sweep(&op, &g0, 0, black_box(&sigmas), 1, &opts, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, resolvent_sweep, le_sweep);
criterion_main!(benches);
