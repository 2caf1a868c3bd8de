//! The acceptance suite behind `exec-lab selftest`. Every criterion returns
//! an [`Outcome`]; the integration tests call the same functions.

use std::path::Path;
use std::time::Instant;

use anyhow::Result;
use exec_lab_core::bsde::{
    discrete_value_recursion, ode_residual, solve_y, solve_y_constant, solve_y_deterministic, solve_y_jump,
    solve_y_lambert, solve_y_negres, solve_y_ode, solve_y_ow, ValueSolution,
};
use exec_lab_core::coefficients::{simulate_path, CoefficientModel, MarketPath, Piece, TimeGrid};
use exec_lab_core::cost::{
    closed_form_j_gbm, closed_form_tilde_j, estimate_cost, pathwise_cost, quadratic_representation_rhs,
    value_function, Accounting, CostEstimate,
};
use exec_lab_core::deviation::{deviation_path, Strategy};
use exec_lab_core::strategy::{
    counterexample_brownian, counterexample_gbm_strategy, dynamic_consistency_check, hold_then_close,
    immediate_close, optimal_plan, OptimalPlan,
};
use serde::Serialize;

use crate::experiments::{plan_grid_cost, representation_study, write_json};
use crate::figures::{reproduce_figure, FigureName};
use crate::report::relative_spread;

pub const DEFAULT_SEED: u64 = 20_200_505;
pub const MC_PATHS: usize = 100_000;
pub const MC_STEP: f64 = 1e-3;
pub const RUNTIME_LIMIT_S: f64 = 15.0 * 60.0;

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    #[serde(skip)]
    pub seconds: f64,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} [{}] {}: {} ({:.1}s)",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.seconds
        )
    }
}

fn timed(id: u8, name: &'static str, body: impl FnOnce() -> Result<(bool, String)>) -> Outcome {
    let start = Instant::now();
    let (pass, detail) = match body() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e:#}")),
    };
    Outcome { id, name, pass, detail, seconds: start.elapsed().as_secs_f64() }
}

fn ratio_in(r: f64) -> bool {
    (1.7..=2.3).contains(&r)
}

fn ow_model(horizon: f64) -> Result<CoefficientModel> {
    Ok(CoefficientModel::constant(horizon, 1.0, 0.5, 0.0, 0.0)?)
}

fn lambert_model() -> Result<CoefficientModel> {
    Ok(CoefficientModel::constant(10.0, 1.0, 0.5, 0.0, 0.8)?)
}

fn jump_model() -> Result<CoefficientModel> {
    Ok(CoefficientModel::new(
        5.0,
        1.0,
        vec![Piece::new(0.0, 0.3, 0.0, 0.0), Piece::new(4.0, 0.3, 1.0, 0.0)],
    )?)
}

fn negres_model() -> Result<CoefficientModel> {
    Ok(CoefficientModel::constant(5.0, 1.0, -0.1, 0.5, 0.0)?)
}

fn mc_grid(horizon: f64) -> Result<TimeGrid> {
    Ok(TimeGrid::with_step(horizon, MC_STEP)?)
}

/// Grid cost of the deterministic optimal plan against `1/7`, first order.
pub fn criterion_1() -> Outcome {
    timed(1, "OW grid cost converges first order to 1/7", || {
        let model = ow_model(10.0)?;
        let v = 1.0 / 7.0;
        let mut errors = Vec::new();
        for h in [1e-2, 5e-3, 2.5e-3] {
            let grid = TimeGrid::with_step(10.0, h)?;
            errors.push((plan_grid_cost(&model, &grid, 1.0, 0.0, DEFAULT_SEED)? - v).abs());
        }
        let r1 = errors[0] / errors[1];
        let r2 = errors[1] / errors[2];
        Ok((
            ratio_in(r1) && ratio_in(r2),
            format!(
                "errors {:.3e}, {:.3e}, {:.3e}; ratios {r1:.3}, {r2:.3} (need [1.7, 2.3])",
                errors[0], errors[1], errors[2]
            ),
        ))
    })
    .with_time_limit(1.0)
}

/// Lambert W solution: residual, terminal value, agreement with RK4.
pub fn criterion_2() -> Outcome {
    timed(2, "Lambert W value solution residual and RK4 agreement", || {
        let model = lambert_model()?;
        let grid = mc_grid(10.0)?;
        let exact = solve_y_lambert(&model, &grid)?;
        let residual = ode_residual(&exact, &model)?;
        let terminal = exact.y[grid.n_steps()];
        let ode = solve_y_ode(&model, &grid)?;
        let sup = exact.y.iter().zip(&ode.y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        Ok((
            residual <= 1e-5 && terminal == 0.5 && sup <= 1e-8,
            format!("residual {residual:.3e} (<= 1e-5), y(T) = {terminal}, sup |lambert - rk4| {sup:.3e} (<= 1e-8)"),
        ))
    })
    .with_time_limit(1.0)
}

fn lambert_plan_cost() -> Result<(CostEstimate, f64)> {
    let model = lambert_model()?;
    let grid = mc_grid(10.0)?;
    let solution = solve_y_lambert(&model, &grid)?;
    let v = value_function(solution.y0(), 1.0, 100.0, 0.0)?.v;
    let est = estimate_cost(
        &model,
        &grid,
        MC_PATHS,
        DEFAULT_SEED + 3,
        |m| Ok(optimal_plan(&model, &solution, m, 0.0, 100.0, 0.0)?.x_star),
        0.0,
        Accounting::Standard,
    )?;
    Ok((est, v))
}

/// Monte Carlo cost of the optimal plan against the value function.
pub fn criterion_3() -> Outcome {
    timed(3, "Monte Carlo cost of the stochastic optimal plan matches V", || {
        let (est, v) = lambert_plan_cost()?;
        let z = est.z_score(v);
        Ok((
            z <= 3.0,
            format!("mean {:.4} +- {:.4} vs V = {v:.4}; {z:.2} s.e.", est.mean, est.std_error),
        ))
    })
}

/// Naive cost of `nu W` against its closed form.
pub fn criterion_4() -> Outcome {
    timed(4, "naive cost of nu W diverges like nu^2", || {
        let model = CoefficientModel::constant(10.0, 1.0, 0.05, 0.0, 0.0)?;
        let grid = mc_grid(10.0)?;
        let mut ests = Vec::new();
        let mut pass = true;
        let mut detail = Vec::new();
        for (i, nu) in [1.0, 2.0, 4.0].into_iter().enumerate() {
            let reference = closed_form_tilde_j(1.0, 0.05, 10.0, nu)?;
            let est = estimate_cost(
                &model,
                &grid,
                MC_PATHS,
                DEFAULT_SEED + 40 + i as u64,
                |m| counterexample_brownian(nu, m),
                0.0,
                Accounting::NaiveCost,
            )?;
            let z = est.z_score(reference);
            pass &= z <= 3.0;
            detail.push(format!("nu={nu}: {:.4} +- {:.4} vs {reference:.4} ({z:.2} s.e.)", est.mean, est.std_error));
            ests.push(est);
        }
        let (j1, j2, j4) = (&ests[0], &ests[1], &ests[2]);
        let ordered = j4.mean < j2.mean && j2.mean < j1.mean && j1.mean < 0.0;
        let scale_gap = (j4.mean - 4.0 * j2.mean).abs();
        let scale_tol = 3.0 * (j4.std_error.powi(2) + 16.0 * j2.std_error.powi(2)).sqrt();
        pass &= ordered && scale_gap <= scale_tol;
        detail.push(format!(
            "J(4) < J(2) < J(1) < 0: {ordered}; |J(4) - 4 J(2)| = {scale_gap:.4} (<= {scale_tol:.4})"
        ));
        Ok((pass, detail.join("; ")))
    })
}

/// Cost of the geometric strategy under the naive deviation.
pub fn criterion_5() -> Outcome {
    timed(5, "naive-dynamics cost of x E(nu W) matches closed form", || {
        let model = lambert_model()?;
        let grid = mc_grid(10.0)?;
        let reference = closed_form_j_gbm(1.0, 1.0, 0.8, 0.5, 10.0, -1.0)?;
        let est = estimate_cost(
            &model,
            &grid,
            MC_PATHS,
            DEFAULT_SEED + 5,
            |m| counterexample_gbm_strategy(-1.0, 1.0, m),
            0.0,
            Accounting::NaiveDynamics,
        )?;
        let z = est.z_score(reference);
        let j: Vec<f64> = [-2.0, -4.0, -6.0]
            .iter()
            .map(|&nu| closed_form_j_gbm(1.0, 1.0, 0.8, 0.5, 10.0, nu))
            .collect::<exec_lab_core::Result<_>>()?;
        let decreasing = j[0] > j[1] && j[1] > j[2];
        Ok((
            z <= 3.0 && decreasing,
            format!(
                "nu=-1: {:.4} +- {:.4} vs {reference:.4} ({z:.2} s.e.); J(-2), J(-4), J(-6) = {:.3e}, {:.3e}, {:.3e}",
                est.mean, est.std_error, j[0], j[1], j[2]
            ),
        ))
    })
}

/// Discrete value recursion converges at first order in both regimes.
pub fn criterion_6() -> Outcome {
    timed(6, "discrete value recursion converges first order", || {
        let mut pass = true;
        let mut detail = Vec::new();
        for (label, model) in [("OW", ow_model(10.0)?), ("Lambert", lambert_model()?)] {
            let target = solve_y(&model, &TimeGrid::over(10.0, 10)?)?.y0();
            let errs: Vec<f64> = [1e-1, 5e-2, 2.5e-2]
                .iter()
                .map(|&h| Ok((discrete_value_recursion(&model, h)?.y0() - target).abs()))
                .collect::<Result<_>>()?;
            let (r1, r2) = (errs[0] / errs[1], errs[1] / errs[2]);
            pass &= ratio_in(r1) && ratio_in(r2);
            detail.push(format!(
                "{label}: errors {:.3e}, {:.3e}, {:.3e}; ratios {r1:.3}, {r2:.3}",
                errs[0], errs[1], errs[2]
            ));
        }
        Ok((pass, detail.join("; ")))
    })
}

/// Direct cost against the representation formula.
pub fn criterion_7() -> Outcome {
    timed(7, "quadratic representation matches direct cost", || {
        // Deterministic part: hold then close in the OW regime.
        let model = ow_model(1.0)?;
        let grid = TimeGrid::over(1.0, 100_000)?;
        let solution = solve_y_ow(&model, &grid)?;
        let market = simulate_path(&model, &grid, DEFAULT_SEED, 0)?;
        let strategy = hold_then_close(&grid, 1.0)?;
        let dev = deviation_path(&model, &market, &strategy, 0.0)?;
        let direct = pathwise_cost(&strategy, &dev, &market)?;
        let rhs = quadratic_representation_rhs(&model, &solution, &market, &strategy, &dev)?;
        let det_gap = (direct - rhs).abs();

        // Stochastic part: linear liquidation in the Lambert W regime.
        let model = lambert_model()?;
        let grid = mc_grid(10.0)?;
        let solution = solve_y_lambert(&model, &grid)?;
        let [direct_mc, rhs_mc, _] = representation_study(
            &model,
            &grid,
            &solution,
            MC_PATHS,
            DEFAULT_SEED + 7,
            0.0,
            |m: &MarketPath| {
                let values = (0..m.grid.n_points()).map(|k| 100.0 * (1.0 - m.grid.time(k) / 10.0)).collect();
                Strategy::new(m.grid, 100.0, values)
            },
        )?;
        let combined = (direct_mc.std_error.powi(2) + rhs_mc.std_error.powi(2)).sqrt();
        let mc_gap = (direct_mc.mean - rhs_mc.mean).abs();
        Ok((
            det_gap <= 1e-6 && mc_gap <= 3.0 * combined,
            format!(
                "OW hold-then-close: direct {direct:.9} vs rhs {rhs:.9} (gap {det_gap:.2e} <= 1e-6); \
                 Lambert linear liquidation: {:.3} vs {:.3}, gap {mc_gap:.3} (<= {:.3})",
                direct_mc.mean,
                rhs_mc.mean,
                3.0 * combined
            ),
        ))
    })
}

/// `D*` is constant between the plan's block trades.
fn level_spread(plan: &OptimalPlan) -> f64 {
    let n = plan.grid.n_steps();
    let mut cuts: Vec<usize> = plan
        .block_trades(1e-12)
        .iter()
        .map(|b| b.index)
        .filter(|&k| k > 0 && k < n)
        .collect();
    cuts.insert(0, 0);
    cuts.push(n);
    cuts.windows(2)
        .map(|w| relative_spread(&plan.d_star.values[w[0]..w[1]]))
        .fold(0.0, f64::max)
}

/// Structural invariants over a matrix of regimes.
pub fn criterion_8() -> Outcome {
    timed(8, "structural invariants", || {
        let mut failures = Vec::new();
        let mut solutions: Vec<(&str, CoefficientModel, ValueSolution)> = Vec::new();
        let ow = ow_model(10.0)?;
        let g10 = TimeGrid::over(10.0, 10_000)?;
        let g5 = TimeGrid::over(5.0, 5_000)?;
        let lam = lambert_model()?;
        let jump = jump_model()?;
        let negres = negres_model()?;
        let no_res = CoefficientModel::constant(10.0, 1.0, 0.0, 0.3, 0.4)?;
        let mixed = CoefficientModel::new(
            10.0,
            1.0,
            vec![Piece::new(0.0, 0.5, 0.0, 0.8), Piece::new(5.0, 0.8, 0.2, 0.5)],
        )?;
        solutions.push(("ow", ow.clone(), solve_y_ow(&ow, &g10)?));
        solutions.push(("lambert", lam.clone(), solve_y_lambert(&lam, &g10)?));
        solutions.push(("lambert_rk4", lam.clone(), solve_y_ode(&lam, &g10)?));
        solutions.push(("jump", jump.clone(), solve_y_jump(&jump, &g5)?));
        solutions.push(("jump_bernoulli", jump.clone(), solve_y_deterministic(&jump, &g5)?));
        solutions.push(("negres", negres.clone(), solve_y_negres(&negres, &g5)?));
        solutions.push(("no_resilience", no_res.clone(), solve_y_constant(&no_res, &g10)?));
        solutions.push(("mixed_rk4", mixed.clone(), solve_y_ode(&mixed, &g10)?));
        for (label, _, s) in &solutions {
            let n = s.grid.n_steps();
            if !s.y.iter().all(|&y| (0.0..=0.5).contains(&y)) || s.y[n] != 0.5 {
                failures.push(format!("{label}: y outside [0, 1/2] or y(T) != 1/2"));
            }
        }

        let mut worst_state = 0.0f64;
        let mut worst_level = 0.0f64;
        let mut worst_consistency = 0.0f64;
        for (label, model, solution) in &solutions {
            let paths = if model.sigma_vanishes() { 1 } else { 5 };
            for path in 0..paths {
                let market = simulate_path(model, &solution.grid, DEFAULT_SEED + 8, path)?;
                for (x, d) in [(100.0, 0.0), (1.0, 0.7), (-2.0, 0.3)] {
                    let plan = optimal_plan(model, solution, &market, 0.0, x, d)?;
                    worst_state = worst_state.max(plan.impact_state_drift());
                    let u = 0.5 * model.horizon();
                    worst_consistency =
                        worst_consistency.max(dynamic_consistency_check(model, solution, &market, &plan, u)?);
                    if d == 0.0 && matches!(*label, "ow" | "jump" | "negres") {
                        worst_level = worst_level.max(level_spread(&plan));
                    }
                    if *label == "no_resilience" && plan.x_star != immediate_close(&solution.grid, 0.0, x)? {
                        failures.push(format!("no_resilience plan differs from immediate close (x={x}, d={d})"));
                    }
                }
            }
        }
        if worst_state > 1e-10 {
            failures.push(format!("impact-state drift {worst_state:.2e}"));
        }
        if worst_level > 1e-10 {
            failures.push(format!("deviation level spread {worst_level:.2e}"));
        }
        if worst_consistency > 1e-10 {
            failures.push(format!("dynamic consistency {worst_consistency:.2e}"));
        }
        let detail = format!(
            "{} solutions bounded; impact-state drift {worst_state:.2e}, D* level spread {worst_level:.2e}, \
             consistency gap {worst_consistency:.2e} (all <= 1e-10){}",
            solutions.len(),
            if failures.is_empty() { String::new() } else { format!("; failures: {}", failures.join(", ")) }
        );
        Ok((failures.is_empty(), detail))
    })
}

/// Jump of the feedback ratio and block-trade times in the drift-jump example.
pub fn criterion_9() -> Outcome {
    timed(9, "drift jump: feedback jump and block trade times", || {
        let model = jump_model()?;
        let grid = TimeGrid::over(5.0, 5_000)?;
        let solution = solve_y_jump(&model, &grid)?;
        let k0 = grid.index_of(4.0).unwrap_or(0);
        let jump = solution.beta_tilde[k0] - solution.beta_left[k0];
        let expected = solution.y[k0] / (2.0 * 0.3 + 1.0);
        let jump_err = (jump - expected).abs();
        let market = simulate_path(&model, &grid, DEFAULT_SEED, 0)?;
        let plan = optimal_plan(&model, &solution, &market, 0.0, 100.0, 0.0)?;
        let blocks: Vec<usize> = plan.block_trades(1e-12).iter().map(|b| b.index).collect();
        let later: Vec<usize> = blocks.iter().copied().filter(|&k| k > 0).collect();
        let times_ok = later == vec![k0, grid.n_steps()];
        Ok((
            jump_err <= 1e-10 && times_ok,
            format!(
                "jump {jump:.12} vs y(t0)/(2 rho + 1) = {expected:.12} (err {jump_err:.1e}); block times {:?}",
                blocks.iter().map(|&k| grid.time(k)).collect::<Vec<_>>()
            ),
        ))
    })
}

/// Deterministic artifacts: the three figures and the criterion summary.
pub fn write_artifacts(out_dir: &Path, outcomes: &[Outcome]) -> Result<Vec<std::path::PathBuf>> {
    let mut paths = Vec::new();
    for name in [FigureName::LambertW, FigureName::Jump, FigureName::NegRes] {
        paths.push(reproduce_figure(name, out_dir, DEFAULT_SEED)?.path);
    }
    let summary = serde_json::json!({
        "schema_version": crate::report::SCHEMA_VERSION,
        "seed": DEFAULT_SEED,
        "criteria": outcomes,
        "pass": outcomes.iter().all(|o| o.pass),
    });
    let path = out_dir.join("selftest_summary.json");
    write_json(&path, &summary)?;
    paths.push(path);
    Ok(paths)
}

fn identical_files(a: &[std::path::PathBuf], b: &[std::path::PathBuf]) -> Result<bool> {
    if a.len() != b.len() {
        return Ok(false);
    }
    for (pa, pb) in a.iter().zip(b) {
        if std::fs::read(pa)? != std::fs::read(pb)? {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn run_criteria() -> Vec<Outcome> {
    vec![
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),
        criterion_9(),
    ]
}

/// Runs criteria 1-9, writes the artifacts twice and compares them byte by
/// byte, then reports criterion 10. Progress lines go to `log`.
pub fn run_selftest(out_dir: &Path, mut log: impl FnMut(&str)) -> Result<Vec<Outcome>> {
    let start = Instant::now();
    let mut outcomes = Vec::new();
    for criterion in [
        criterion_1 as fn() -> Outcome,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
        criterion_9,
    ] {
        let outcome = criterion();
        log(&outcome.line());
        outcomes.push(outcome);
    }
    let first = write_artifacts(&out_dir.join("run_a"), &outcomes)?;
    let second = write_artifacts(&out_dir.join("run_b"), &outcomes)?;
    let identical = identical_files(&first, &second)?;
    let elapsed = start.elapsed().as_secs_f64();
    let earlier_pass = outcomes.iter().all(|o| o.pass);
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id.to_string()).collect();
    let outcome = Outcome {
        id: 10,
        name: "selftest end to end, reproducible, within 15 minutes",
        pass: earlier_pass && identical && elapsed <= RUNTIME_LIMIT_S,
        detail: format!(
            "artifacts byte-identical: {identical}; runtime {elapsed:.0}s (<= {RUNTIME_LIMIT_S:.0}s); \
             failing criteria: {}",
            if failed.is_empty() { "none".to_string() } else { failed.join(", ") }
        ),
        seconds: elapsed,
    };
    log(&outcome.line());
    outcomes.push(outcome);
    Ok(outcomes)
}

trait TimeLimit {
    fn with_time_limit(self, seconds: f64) -> Self;
}

impl TimeLimit for Outcome {
    /// Fails an outcome that exceeded its runtime budget.
    fn with_time_limit(mut self, seconds: f64) -> Self {
        if self.seconds > seconds {
            self.pass = false;
            self.detail.push_str(&format!("; runtime {:.2}s exceeds {seconds}s", self.seconds));
        }
        self
    }
}
