use exec_lab_core::bsde::{solve_y, solve_y_jump, solve_y_lambert, solve_y_negres};
use exec_lab_core::coefficients::{simulate_market, simulate_path, CoefficientModel, Piece, TimeGrid};
use exec_lab_core::deviation::admissibility_diagnostics;
use exec_lab_core::strategy::{classify_initial_block, optimal_plan, InitialBlock, OptimalPlan};

fn spread(values: &[f64]) -> f64 {
    let first = values[0];
    values.iter().map(|v| (v - first).abs() / first.abs()).fold(0.0, f64::max)
}

fn plan(model: &CoefficientModel, steps: usize, x: f64, d: f64) -> OptimalPlan {
    let grid = TimeGrid::over(model.horizon(), steps).unwrap();
    let solution = solve_y(model, &grid).unwrap();
    let market = simulate_path(model, &grid, 7, 0).unwrap();
    optimal_plan(model, &solution, &market, 0.0, x, d).unwrap()
}

#[test]
fn ow_plan_keeps_deviation_flat_and_sells_monotonically() {
    let model = CoefficientModel::constant(10.0, 1.0, 0.5, 0.0, 0.0).unwrap();
    let p = plan(&model, 1000, 1.0, 0.0);
    let n = p.grid.n_steps();
    assert!(spread(&p.d_star.values[..n]) < 1e-12);
    let x = p.x_star.values();
    assert!(x.windows(2).all(|w| w[1] <= w[0]));
    // Initial and terminal blocks are equal in the classical model.
    let blocks = p.block_trades(1e-12);
    assert_eq!(blocks.len(), 2);
    assert!((blocks[0].size - blocks[1].size).abs() < 1e-12);
    assert!((blocks[0].size + 1.0 / 7.0).abs() < 1e-12);
}

#[test]
fn jump_plan_has_two_deviation_levels() {
    let model = CoefficientModel::new(
        5.0,
        1.0,
        vec![Piece::new(0.0, 0.3, 0.0, 0.0), Piece::new(4.0, 0.3, 1.0, 0.0)],
    )
    .unwrap();
    let grid = TimeGrid::over(5.0, 5000).unwrap();
    let solution = solve_y_jump(&model, &grid).unwrap();
    let market = simulate_path(&model, &grid, 7, 0).unwrap();
    let p = optimal_plan(&model, &solution, &market, 0.0, 100.0, 0.0).unwrap();
    let d = &p.d_star.values;
    assert!(spread(&d[..4000]) < 1e-10);
    assert!(spread(&d[4000..5000]) < 1e-10);
    assert!((d[0] - d[4000]).abs() > 1e-3 * d[0].abs());
    let interior: Vec<usize> = p.block_trades(1e-12).iter().map(|b| b.index).filter(|&k| k > 0 && k < 5000).collect();
    assert_eq!(interior, vec![4000]);
}

#[test]
fn negative_resilience_block_overshoots() {
    let model = CoefficientModel::constant(5.0, 1.0, -0.1, 0.5, 0.0).unwrap();
    let grid = TimeGrid::over(5.0, 5000).unwrap();
    let solution = solve_y_negres(&model, &grid).unwrap();
    let market = simulate_path(&model, &grid, 7, 0).unwrap();
    let p = optimal_plan(&model, &solution, &market, 0.0, 100.0, 0.0).unwrap();
    assert!(spread(&p.d_star.values[..5000]) < 1e-10);
    let first = p.x_star.values()[0];
    assert!(first < 0.0, "position after the first block is {first}");
    assert!((first - 100.0).abs() > 100.0);
    assert_eq!(classify_initial_block(&p), InitialBlock::Sell);
}

#[test]
fn lambert_plan_stays_long_and_trades_diffusively() {
    let model = CoefficientModel::constant(10.0, 1.0, 0.5, 0.0, 0.8).unwrap();
    let mut qv = Vec::new();
    for steps in [2000, 8000] {
        let grid = TimeGrid::over(10.0, steps).unwrap();
        let solution = solve_y_lambert(&model, &grid).unwrap();
        let market = simulate_path(&model, &grid, 3, 0).unwrap();
        let p = optimal_plan(&model, &solution, &market, 0.0, 100.0, 0.0).unwrap();
        assert!(p.x_star.values()[..steps].iter().all(|&x| x > 0.0));
        assert!(p.impact_state_drift() < 1e-10);
        qv.push(p.x_star.interior_quadratic_variation());
    }
    // Finite-variation paths would have quadratic variation shrinking like h.
    assert!(qv[1] > 0.5 * qv[0], "quadratic variation {qv:?}");
}

#[test]
fn initial_block_vanishes_on_the_no_trade_line() {
    let model = CoefficientModel::constant(10.0, 1.0, 0.5, 0.0, 0.8).unwrap();
    let grid = TimeGrid::over(10.0, 1000).unwrap();
    let solution = solve_y_lambert(&model, &grid).unwrap();
    let market = simulate_path(&model, &grid, 3, 0).unwrap();
    let beta = solution.beta_tilde[0];
    let x = 10.0;
    let d = -beta * x / (1.0 - beta);
    let p = optimal_plan(&model, &solution, &market, 0.0, x, d).unwrap();
    assert_eq!(classify_initial_block(&p), InitialBlock::None);
    let p = optimal_plan(&model, &solution, &market, 0.0, x, 0.0).unwrap();
    assert_eq!(classify_initial_block(&p), InitialBlock::Sell);
}

#[test]
fn lambert_plan_passes_admissibility_diagnostics() {
    let model = CoefficientModel::constant(10.0, 1.0, 0.5, 0.0, 0.8).unwrap();
    let grid = TimeGrid::over(10.0, 1000).unwrap();
    let solution = solve_y_lambert(&model, &grid).unwrap();
    let markets = simulate_market(&model, &grid, 10_000, 13).unwrap();
    let report = admissibility_diagnostics(
        &model,
        &markets,
        |m| Ok(optimal_plan(&model, &solution, m, 0.0, 100.0, 0.0)?.x_star),
        0.0,
    )
    .unwrap();
    assert!(report.diagnostic_only);
    for stats in [report.sup_impact_state, report.impact_state_volatility, report.deviation_volatility] {
        assert!(stats.mean.is_finite() && stats.std_error.is_finite());
        assert!(stats.std_error < stats.mean, "{stats:?}");
    }
}
