use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use finsler_bench::l4_quarter_region;
use finsler_core::gauge::{DualGauge, Gauge};
use finsler_core::geometry::mesh_region;
use finsler_core::identities::{capacity_constant, pohozaev_check, TraceMode};
use finsler_core::solver::{solve_truncated, SolveOptions, TruncatedProblem};

fn gauges(c: &mut Criterion) {
    let tabulated = Gauge::tabulated_uniform((0..24).map(|k| 1.0 + 0.1 * (k as f64 * std::f64::consts::TAU / 12.0).cos()).collect())
        .expect("valid gauge");
    let closed = DualGauge::new(Gauge::lp(2, 4.0).expect("valid gauge"));
    let maximized = DualGauge::new(tabulated);
    c.bench_function("dual lp4 closed form", |b| b.iter(|| closed.eval_point(black_box(&[0.3, 1.7])).unwrap()));
    c.bench_function("dual tabulated maximization", |b| b.iter(|| maximized.eval_point(black_box(&[0.3, 1.7])).unwrap()));
}

fn pipeline(c: &mut Criterion) {
    let region = l4_quarter_region(8.0);
    let mut group = c.benchmark_group("l4 quarter plane R=8 h=0.1");
    group.sample_size(10);
    group.bench_function("mesh", |b| b.iter(|| mesh_region(&region, 0.1).unwrap()));
    let mesh = Arc::new(mesh_region(&region, 0.1).unwrap());
    let problem = TruncatedProblem::conformal(&region, mesh).unwrap();
    let opts = SolveOptions::default();
    group.bench_function("solve", |b| b.iter(|| solve_truncated(&problem, &opts).unwrap()));
    let report = solve_truncated(&problem, &opts).unwrap();
    group.bench_function("capacity trace", |b| b.iter(|| capacity_constant(&report.field, TraceMode::ConsistentFlux)));
    group.bench_function("pohozaev", |b| b.iter(|| pohozaev_check(&report.field, TraceMode::ConsistentFlux)));
    group.finish();
}

criterion_group!(benches, gauges, pipeline);
criterion_main!(benches);
