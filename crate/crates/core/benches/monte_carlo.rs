//! Parallel against sequential path evaluation for the optimal plan cost in
//! the Lambert W regime. Without the `parallel` feature only the sequential
//! back end is measured.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use exec_lab_core::bsde::solve_y_lambert;
use exec_lab_core::coefficients::{CoefficientModel, MarketSimulator, TimeGrid};
use exec_lab_core::cost::{path_cost, Accounting};
use exec_lab_core::mc;
use exec_lab_core::strategy::optimal_plan;

fn plan_costs(c: &mut Criterion) {
    let model = CoefficientModel::constant(10.0, 1.0, 0.5, 0.0, 0.8).unwrap();
    let grid = TimeGrid::over(10.0, 1000).unwrap();
    let solution = solve_y_lambert(&model, &grid).unwrap();
    let sim = MarketSimulator::new(&model, &grid).unwrap();
    let one_path = |i: usize| {
        let market = sim.path(1, i as u64);
        let plan = optimal_plan(&model, &solution, &market, 0.0, 100.0, 0.0).unwrap();
        path_cost(&model, &market, &plan.x_star, 0.0, Accounting::Standard).unwrap()
    };

    let mut group = c.benchmark_group("plan_cost");
    group.sample_size(10);
    for n in [256usize, 2048] {
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
            b.iter(|| mc::pairwise_sum(&mc::map_paths_sequential(n, one_path)))
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, &n| {
            b.iter(|| mc::pairwise_sum(&mc::map_paths_parallel(n, one_path)))
        });
    }
    group.finish();
}

criterion_group!(benches, plan_costs);
criterion_main!(benches);
