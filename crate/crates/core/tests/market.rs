use exec_lab_core::coefficients::{simulate_market, simulate_path, CoefficientModel, Piece, TimeGrid};
use exec_lab_core::mc::sample_stats;

const PATHS: usize = 100_000;

#[test]
fn impact_mean_grows_at_drift_rate() {
    let model = CoefficientModel::constant(2.0, 1.5, 0.5, 0.3, 0.6).unwrap();
    let grid = TimeGrid::over(2.0, 20).unwrap();
    let paths = simulate_market(&model, &grid, PATHS, 17).unwrap();
    let terminal: Vec<f64> = paths.iter().map(|p| p.gamma[20]).collect();
    let stats = sample_stats(&terminal);
    let expected = 1.5 * (0.3f64 * 2.0).exp();
    assert!((stats.mean - expected).abs() <= 4.0 * stats.std_error, "{stats:?} vs {expected}");
}

#[test]
fn exponential_martingale_has_unit_mean() {
    let model = CoefficientModel::constant(1.0, 1.0, 0.5, 0.0, 0.8).unwrap();
    let grid = TimeGrid::over(1.0, 10).unwrap();
    let paths = simulate_market(&model, &grid, PATHS, 5).unwrap();
    // With mu = 0, gamma / gamma_0 is the stochastic exponential of sigma W.
    let ratio: Vec<f64> = paths.iter().map(|p| p.gamma[10]).collect();
    let stats = sample_stats(&ratio);
    assert!((stats.mean - 1.0).abs() <= 4.0 * stats.std_error, "{stats:?}");
    let w: Vec<f64> = paths.iter().map(|p| *p.brownian().last().unwrap()).collect();
    let w = sample_stats(&w);
    assert!(w.mean.abs() <= 4.0 * w.std_error);
    assert!((w.std_dev - 1.0).abs() < 0.01);
}

#[test]
fn piecewise_drift_switches_at_breakpoint() {
    let model = CoefficientModel::new(
        2.0,
        1.0,
        vec![Piece::new(0.0, 0.2, 0.0, 0.0), Piece::new(1.0, 0.2, 0.7, 0.0)],
    )
    .unwrap();
    let grid = TimeGrid::over(2.0, 200).unwrap();
    let path = simulate_path(&model, &grid, 1, 0).unwrap();
    assert!(path.gamma[..=100].iter().all(|&g| (g - 1.0).abs() < 1e-14));
    assert!((path.gamma[200] - 0.7f64.exp()).abs() < 1e-12);
}

#[test]
fn paths_depend_only_on_seed_and_index() {
    let model = CoefficientModel::constant(1.0, 1.0, 0.5, 0.1, 0.4).unwrap();
    let grid = TimeGrid::over(1.0, 50).unwrap();
    let all = simulate_market(&model, &grid, 8, 99).unwrap();
    let single = simulate_path(&model, &grid, 99, 5).unwrap();
    assert_eq!(all[5], single);
    assert_ne!(all[4].w, all[5].w);
}
