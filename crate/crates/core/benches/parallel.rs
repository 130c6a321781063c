use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qma_core::fields::{omega_phi, FlatBackground};
use qma_core::par;
use qma_core::solver::{evaluate, random_f, rng, solve_qma, SolverConfig, Workspace};
use qma_core::suites::{random_admissible_phi, run_suite, ChartChoice, Suite, SuiteConfig};
use std::hint::black_box;

fn modes() -> [(&'static str, bool); 2] {
    [("parallel", true), ("sequential", false)]
}

fn grid_kernels(c: &mut Criterion) {
    let bg = FlatBackground::standard(1);
    let cfg = SolverConfig {
        size: 16,
        ..SolverConfig::default()
    };
    let grid = cfg.grid().unwrap();
    let phi = random_admissible_phi(&bg, &grid, &mut rng(3, 0)).unwrap();
    let tf = random_f(&grid, 0.3, 4);
    let ws = Workspace::new(&grid, &bg).unwrap();

    let mut group = c.benchmark_group("grid_n16");
    for (name, on) in modes() {
        par::set_parallel(on);
        group.bench_function(BenchmarkId::new("omega_phi", name), |b| {
            b.iter(|| omega_phi(&bg, black_box(&phi)).unwrap())
        });
        group.bench_function(BenchmarkId::new("evaluate", name), |b| {
            b.iter(|| evaluate(&ws, black_box(phi.values()), tf.values(), 0.0).unwrap())
        });
    }
    group.finish();
    par::set_parallel(true);
}

fn full_solve(c: &mut Criterion) {
    let bg = FlatBackground::standard(1);
    let cfg = SolverConfig {
        size: 8,
        ..SolverConfig::default()
    };
    let grid = cfg.grid().unwrap();
    let f = random_f(&grid, 0.3, 12);

    let mut group = c.benchmark_group("solve_n8");
    group.sample_size(10);
    for (name, on) in modes() {
        par::set_parallel(on);
        group.bench_function(name, |b| b.iter(|| solve_qma(black_box(&f), &bg, &cfg).unwrap()));
    }
    group.finish();
    par::set_parallel(true);
}

fn chart_suite(c: &mut Criterion) {
    let mut cfg = SuiteConfig::new(Suite::Fund, ChartChoice::EguchiHanson { a: 1.0 });
    cfg.points = 8;
    cfg.samples = 4;
    let mut group = c.benchmark_group("fund_eh");
    group.sample_size(10);
    for (name, on) in modes() {
        par::set_parallel(on);
        group.bench_function(name, |b| b.iter(|| run_suite(black_box(&cfg)).unwrap()));
    }
    group.finish();
    par::set_parallel(true);
}

criterion_group!(benches, grid_kernels, full_solve, chart_suite);
criterion_main!(benches);
