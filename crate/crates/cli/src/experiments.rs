//! Config-driven experiments. Each run writes its artifacts and a
//! `summary.json` into the output directory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use exec_lab_core::bsde::{discrete_value_recursion, ode_residual, solve_y, ValueSolution};
use exec_lab_core::coefficients::{simulate_path, CoefficientModel, MarketPath, MarketSimulator, TimeGrid};
use exec_lab_core::cost::{
    closed_form_j_gbm, closed_form_tilde_j, estimate_cost, pathwise_cost, quadratic_representation_rhs,
    value_function, Accounting,
};
use exec_lab_core::deviation::{deviation_path, Strategy};
use exec_lab_core::export::{write_discrete_value, write_plan, write_value_solution};
use exec_lab_core::mc::{self, sample_stats};
use exec_lab_core::strategy::{
    counterexample_brownian, counterexample_gbm_strategy, hold_then_close, optimal_plan,
};

use crate::config::ExperimentConfig;
use crate::figures::{figure_checks, write_figure, FigureName};
use crate::report::{Check, Summary};

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).with_context(|| format!("writing {}", path.display()))?;
    writeln!(w).with_context(|| format!("writing {}", path.display()))?;
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn csv_file(out_dir: &Path, name: &str, summary: &mut Summary) -> Result<BufWriter<File>> {
    let path = out_dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    summary.artifacts.push(name.to_string());
    Ok(BufWriter::new(file))
}

/// Grid cost of the optimal plan on a path of `model` (deterministic when
/// `sigma = 0`).
pub fn plan_grid_cost(model: &CoefficientModel, grid: &TimeGrid, x: f64, d: f64, seed: u64) -> Result<f64> {
    let solution = solve_y(model, grid)?;
    let market = simulate_path(model, grid, seed, 0)?;
    let plan = optimal_plan(model, &solution, &market, 0.0, x, d)?;
    let dev = deviation_path(model, &market, &plan.x_star, d)?;
    Ok(pathwise_cost(&plan.x_star, &dev, &market)?)
}

/// Paired Monte Carlo of the direct cost and the representation for a
/// strategy family: returns `(direct, rhs, difference)` statistics.
pub fn representation_study<F>(
    model: &CoefficientModel,
    grid: &TimeGrid,
    solution: &ValueSolution,
    n_paths: usize,
    seed: u64,
    d: f64,
    factory: F,
) -> Result<[mc::SampleStats; 3]>
where
    F: Fn(&MarketPath) -> exec_lab_core::Result<Strategy> + Sync + Send,
{
    let sim = MarketSimulator::new(model, grid)?;
    let pairs = mc::map_paths(n_paths, |i| -> exec_lab_core::Result<(f64, f64)> {
        let market = sim.path(seed, i as u64);
        let strategy = factory(&market)?;
        let dev = deviation_path(model, &market, &strategy, d)?;
        let direct = pathwise_cost(&strategy, &dev, &market)?;
        let rhs = quadratic_representation_rhs(model, solution, &market, &strategy, &dev)?;
        Ok((direct, rhs))
    })
    .into_iter()
    .collect::<exec_lab_core::Result<Vec<_>>>()?;
    let direct: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let rhs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let diff: Vec<f64> = pairs.iter().map(|p| p.0 - p.1).collect();
    Ok([sample_stats(&direct), sample_stats(&rhs), sample_stats(&diff)])
}

/// Runs `config`, writing artifacts into `out_dir`.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<Summary> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let model = config.model()?;
    let grid = config.grid()?;
    let mut summary = Summary::new(&config.experiment, model.model_hash(), config.seed);
    let (x, d, seed) = (config.x, config.d, config.seed);

    match config.experiment.as_str() {
        "ow_value" => {
            let solution = solve_y(&model, &grid)?;
            let quote = value_function(solution.y0(), model.gamma0(), x, d)?;
            summary.record("V", quote.v);
            summary.record("Y0", solution.y0());
            let mut errors = Vec::new();
            for factor in [1usize, 2, 4] {
                let g = TimeGrid::over(model.horizon(), config.grid_steps * factor)?;
                let cost = plan_grid_cost(&model, &g, x, d, seed)?;
                errors.push(serde_json::json!({"h": g.h(), "cost": cost, "error": (cost - quote.v).abs()}));
            }
            let err0 = errors[0]["error"].as_f64().unwrap_or(f64::NAN);
            summary.record("grid_costs", &errors);
            summary.check(Check::at_most("grid_cost_error_within_h", err0, grid.h() * quote.v.abs().max(1.0)));
            let market = simulate_path(&model, &grid, seed, 0)?;
            let plan = optimal_plan(&model, &solution, &market, 0.0, x, d)?;
            write_plan(csv_file(out_dir, "plan.csv", &mut summary)?, &plan)?;
            write_value_solution(csv_file(out_dir, "value_solution.csv", &mut summary)?, &solution)?;
        }
        "lambert_value" => {
            let solution = solve_y(&model, &grid)?;
            let quote = value_function(solution.y0(), model.gamma0(), x, d)?;
            let est = estimate_cost(
                &model,
                &grid,
                config.n_paths,
                seed,
                |m| Ok(optimal_plan(&model, &solution, m, 0.0, x, d)?.x_star),
                d,
                Accounting::Standard,
            )?;
            summary.record("V", quote.v);
            summary.record("Y0", solution.y0());
            summary.record("solution_source", solution.source);
            summary.record("cost_estimate", &est);
            summary.check(Check::at_most("cost_within_3_se", est.z_score(quote.v), 3.0));
            write_value_solution(csv_file(out_dir, "value_solution.csv", &mut summary)?, &solution)?;
            write_json(&out_dir.join("cost_estimate.json"), &est)?;
            summary.artifacts.push("cost_estimate.json".into());
        }
        "counterexample_bm" => {
            let nu = config.nu()?;
            let p = model.pieces()[0];
            if model.pieces().len() != 1 || p.mu != 0.0 || p.sigma != 0.0 {
                bail!("counterexample_bm needs a single piece with mu = sigma = 0");
            }
            let reference = closed_form_tilde_j(model.gamma0(), p.rho, model.horizon(), nu)?;
            let factory = |m: &MarketPath| counterexample_brownian(nu, m);
            let naive = estimate_cost(&model, &grid, config.n_paths, seed, factory, 0.0, Accounting::NaiveCost)?;
            let corrected = estimate_cost(&model, &grid, config.n_paths, seed, factory, 0.0, Accounting::Standard)?;
            summary.record("closed_form", reference);
            summary.record("naive_cost", &naive);
            summary.record("corrected_cost", &corrected);
            summary.check(Check::at_most("naive_within_3_se", naive.z_score(reference), 3.0));
            summary.check(Check::new(
                "corrected_exceeds_naive",
                corrected.mean - naive.mean,
                corrected.mean > naive.mean || nu == 0.0,
            ));
        }
        "counterexample_gbm" => {
            let nu = config.nu()?;
            let p = model.pieces()[0];
            if model.pieces().len() != 1 || p.mu != 0.0 {
                bail!("counterexample_gbm needs a single piece with mu = 0");
            }
            let reference = closed_form_j_gbm(model.gamma0(), x, p.sigma, p.rho, model.horizon(), nu)?;
            let est = estimate_cost(
                &model,
                &grid,
                config.n_paths,
                seed,
                |m| counterexample_gbm_strategy(nu, x, m),
                0.0,
                Accounting::NaiveDynamics,
            )?;
            summary.record("closed_form", reference);
            summary.record("naive_dynamics_cost", &est);
            summary.check(Check::at_most("within_3_se", est.z_score(reference), 3.0));
        }
        "discrete_value" => {
            let dv = discrete_value_recursion(&model, grid.h())?;
            let solution = solve_y(&model, &grid)?;
            let error = (dv.y0() - solution.y0()).abs();
            summary.record("Y_h0", dv.y0());
            summary.record("Y0", solution.y0());
            summary.record("error", error);
            summary.check(Check::at_most("first_order_error_bound", error, grid.h()));
            summary.check(Check::new(
                "values_in_half_open_unit_half",
                dv.y_h.iter().cloned().fold(f64::INFINITY, f64::min),
                dv.y_h.iter().all(|&y| y > 0.0 && y <= 0.5),
            ));
            write_discrete_value(csv_file(out_dir, "discrete_value.csv", &mut summary)?, &dv)?;
        }
        "representation" => {
            let solution = solve_y(&model, &grid)?;
            let [direct, rhs, diff] = representation_study(
                &model,
                &grid,
                &solution,
                config.n_paths,
                seed,
                d,
                |m| hold_then_close(&m.grid, x),
            )?;
            let combined = (direct.std_error.powi(2) + rhs.std_error.powi(2)).sqrt();
            summary.record("direct", direct);
            summary.record("rhs", rhs);
            summary.record("difference", diff);
            summary.check(Check::at_most(
                "direct_matches_rhs",
                (direct.mean - rhs.mean).abs(),
                (3.0 * combined).max(1e-6),
            ));
        }
        "value_solution" => {
            let solution = solve_y(&model, &grid)?;
            let residual = ode_residual(&solution, &model)?;
            summary.record("solution_source", solution.source);
            summary.record("Y0", solution.y0());
            summary.record("ode_residual", residual);
            summary.check(Check::new(
                "y_within_0_half",
                solution.y0(),
                solution.y.iter().all(|&y| (0.0..=0.5).contains(&y)),
            ));
            summary.check(Check::new(
                "terminal_half",
                solution.y[grid.n_steps()],
                solution.y[grid.n_steps()] == 0.5,
            ));
            write_value_solution(csv_file(out_dir, "value_solution.csv", &mut summary)?, &solution)?;
        }
        tag @ ("figure_lambertw" | "figure_jump" | "figure_negres") => {
            let name: FigureName = tag.trim_start_matches("figure_").parse()?;
            let solution = solve_y(&model, &grid)?;
            let market = simulate_path(&model, &grid, seed, 0)?;
            let plan = optimal_plan(&model, &solution, &market, config.t, x, d)?;
            for check in figure_checks(name, &model, &plan) {
                summary.check(check);
            }
            let path = write_figure(name, &plan, out_dir)?;
            summary.artifacts.push(path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
        }
        other => bail!("unknown experiment tag '{other}'"),
    }

    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}
