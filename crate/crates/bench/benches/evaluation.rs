use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use romdx_core::evaluation::{bootstrap_mean_ci, build_report, BootstrapConfig, EvalConfig, Scenario};
use std::hint::black_box;

fn bootstrap(c: &mut Criterion) {
    let sample: Vec<f64> = (0..761).map(|i| f64::from(i % 19) / 18.0).collect();
    let mut group = c.benchmark_group("bootstrap_mean");
    for b in [1_000usize, 10_000] {
        let cfg = BootstrapConfig { b, alpha: 0.05, seed: 1 };
        group.bench_with_input(BenchmarkId::from_parameter(b), &cfg, |bench, cfg| {
            bench.iter(|| black_box(bootstrap_mean_ci(black_box(&sample), cfg).unwrap()))
        });
    }
    group.finish();
}

fn report(c: &mut Criterion) {
    let outcomes = [romdx_bench::outcomes()];
    let cfg = EvalConfig {
        bootstrap: BootstrapConfig { b: 2_000, ..Default::default() },
        ..Default::default()
    };
    c.bench_function("report_761_cases_three_scenarios", |b| {
        b.iter(|| black_box(build_report(&outcomes, &Scenario::ALL, &cfg).unwrap()))
    });
}

criterion_group!(benches, bootstrap, report);
criterion_main!(benches);
