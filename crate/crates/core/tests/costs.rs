use exec_lab_core::bsde::{solve_y, solve_y_ow};
use exec_lab_core::coefficients::{simulate_path, CoefficientModel, TimeGrid};
use exec_lab_core::cost::{pathwise_cost, quadratic_representation_rhs, value_function};
use exec_lab_core::deviation::{deviation_path, impact_state, Strategy};
use exec_lab_core::strategy::{hold_then_close, immediate_close, optimal_plan};

fn ow() -> CoefficientModel {
    CoefficientModel::constant(10.0, 1.0, 0.5, 0.0, 0.0).unwrap()
}

fn linear(grid: TimeGrid, x: f64) -> Strategy {
    let horizon = grid.t_end();
    let values = grid.times().iter().map(|t| x * (1.0 - t / horizon)).collect();
    Strategy::new(grid, x, values).unwrap()
}

fn cost(model: &CoefficientModel, strategy: &Strategy) -> f64 {
    let market = simulate_path(model, strategy.grid(), 1, 0).unwrap();
    let dev = deviation_path(model, &market, strategy, 0.0).unwrap();
    pathwise_cost(strategy, &dev, &market).unwrap()
}

#[test]
fn optimal_plan_cost_approaches_value() {
    let model = ow();
    let v = value_function(solve_y(&model, &TimeGrid::over(10.0, 10).unwrap()).unwrap().y0(), 1.0, 1.0, 0.0)
        .unwrap()
        .v;
    assert!((v - 1.0 / 7.0).abs() < 1e-15);
    let mut errors = Vec::new();
    for steps in [1000, 2000, 4000] {
        let grid = TimeGrid::over(10.0, steps).unwrap();
        let solution = solve_y_ow(&model, &grid).unwrap();
        let market = simulate_path(&model, &grid, 1, 0).unwrap();
        let plan = optimal_plan(&model, &solution, &market, 0.0, 1.0, 0.0).unwrap();
        errors.push((cost(&model, &plan.x_star) - v).abs());
    }
    assert!(errors[0] < 1e-6);
    assert!(errors[1] < errors[0] && errors[2] < errors[1]);
}

#[test]
fn value_is_a_lower_bound() {
    let model = ow();
    let grid = TimeGrid::over(10.0, 2000).unwrap();
    let v = 1.0 / 7.0;
    for strategy in [
        linear(grid, 1.0),
        immediate_close(&grid, 0.0, 1.0).unwrap(),
        hold_then_close(&grid, 1.0).unwrap(),
    ] {
        assert!(cost(&model, &strategy) > v);
    }
}

#[test]
fn representation_matches_direct_cost_for_deterministic_strategies() {
    let model = ow();
    let grid = TimeGrid::over(10.0, 100_000).unwrap();
    let solution = solve_y_ow(&model, &grid).unwrap();
    let market = simulate_path(&model, &grid, 1, 0).unwrap();
    for strategy in [linear(grid, 1.0), hold_then_close(&grid, 1.0).unwrap()] {
        let dev = deviation_path(&model, &market, &strategy, 0.0).unwrap();
        let direct = pathwise_cost(&strategy, &dev, &market).unwrap();
        let rhs = quadratic_representation_rhs(&model, &solution, &market, &strategy, &dev).unwrap();
        assert!((direct - rhs).abs() < 1e-4, "{direct} vs {rhs}");
    }
}

#[test]
fn deviation_of_continuous_strategy_converges_first_order() {
    let model = ow();
    let reference_grid = TimeGrid::over(10.0, 8000).unwrap();
    let reference = {
        let s = linear(reference_grid, 1.0);
        let m = simulate_path(&model, &reference_grid, 1, 0).unwrap();
        deviation_path(&model, &m, &s, 0.0).unwrap().values
    };
    let mut errors = Vec::new();
    for steps in [500, 1000, 2000] {
        let grid = TimeGrid::over(10.0, steps).unwrap();
        let s = linear(grid, 1.0);
        let m = simulate_path(&model, &grid, 1, 0).unwrap();
        let dev = deviation_path(&model, &m, &s, 0.0).unwrap();
        let stride = 8000 / steps;
        let err = (0..=steps).map(|k| (dev.values[k] - reference[k * stride]).abs()).fold(0.0, f64::max);
        errors.push(err);
    }
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.5..=3.0).contains(&ratio), "errors {errors:?}");
    }
}

#[test]
fn impact_state_has_no_jumps_under_block_trades() {
    let model = ow();
    let grid = TimeGrid::over(10.0, 1000).unwrap();
    let market = simulate_path(&model, &grid, 1, 0).unwrap();
    let strategy = hold_then_close(&grid, 1.0).unwrap();
    let dev = deviation_path(&model, &market, &strategy, 0.0).unwrap();
    let a = impact_state(&strategy, &dev, &market);
    // A block trade moves X and alpha D by the same amount.
    let before_close = dev.pre_trade[1000] / market.gamma[1000];
    let a_left = strategy.before(1000) - before_close;
    assert!((a[1000] - a_left).abs() < 1e-12);
}
