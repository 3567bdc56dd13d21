use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use jscc_alloc::assign::{solve_hungarian, solve_k_assignment, Backend, LpOptions};
use jscc_alloc::capacity::{solve_capacity, CapacityOptions};
use jscc_alloc::{build_power_matrix, generate_scenario, P2Options, PsnrModel, SystemConfig};

fn scenario(users: usize, budget: f64) -> jscc_alloc::Scenario {
    generate_scenario(&SystemConfig {
        num_users: users,
        bs_power_budget_w: budget,
        rng_seed: 9,
        ..SystemConfig::default()
    })
    .unwrap()
}

fn power_matrix(c: &mut Criterion) {
    let model = PsnrModel::synthetic();
    let s = scenario(30, 1.0);
    c.bench_function("power_matrix_30x30", |b| {
        b.iter(|| build_power_matrix(black_box(&s), &model, &P2Options::default()).unwrap())
    });
}

fn assignment(c: &mut Criterion) {
    let model = PsnrModel::synthetic();
    let s = scenario(30, 1.0);
    let costs = build_power_matrix(&s, &model, &P2Options::default())
        .unwrap()
        .cost_matrix();
    let mut group = c.benchmark_group("k_assignment_30x30");
    for j in [5, 15, 30] {
        group.bench_with_input(BenchmarkId::new("flow", j), &j, |b, &j| {
            b.iter(|| solve_k_assignment(black_box(&costs), j, Backend::Flow).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("interior_point", j), &j, |b, &j| {
            b.iter(|| {
                solve_k_assignment(
                    black_box(&costs),
                    j,
                    Backend::InteriorPoint(LpOptions::default()),
                )
                .unwrap()
            })
        });
    }
    group.bench_function("hungarian", |b| {
        b.iter(|| solve_hungarian(black_box(&costs)).unwrap())
    });
    group.finish();
}

fn capacity(c: &mut Criterion) {
    let model = PsnrModel::synthetic();
    let mut group = c.benchmark_group("solve_capacity");
    for budget in [0.01, 0.1, 1.0] {
        let s = scenario(30, budget);
        group.bench_with_input(BenchmarkId::from_parameter(budget), &s, |b, s| {
            b.iter(|| solve_capacity(black_box(s), &model, &CapacityOptions::default()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, power_matrix, assignment, capacity);
criterion_main!(benches);
