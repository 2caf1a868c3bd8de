//! Data behind the three plan figures: the Lambert W regime, the drift jump
//! and negative resilience.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use exec_lab_core::bsde::{jump_parameters, solve_y};
use exec_lab_core::coefficients::{simulate_path, CoefficientModel, Piece, TimeGrid};
use exec_lab_core::export::write_plan;
use exec_lab_core::strategy::{optimal_plan, OptimalPlan};

use crate::report::{relative_spread, Check};

/// Relative tolerance for "constant" stretches of the optimal deviation.
pub const LEVEL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureName {
    LambertW,
    Jump,
    NegRes,
}

impl FigureName {
    pub fn as_str(&self) -> &'static str {
        match self {
            FigureName::LambertW => "lambertw",
            FigureName::Jump => "jump",
            FigureName::NegRes => "negres",
        }
    }
}

impl FromStr for FigureName {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambertw" => Ok(FigureName::LambertW),
            "jump" => Ok(FigureName::Jump),
            "negres" => Ok(FigureName::NegRes),
            other => bail!("unknown figure '{other}'; expected lambertw, jump or negres"),
        }
    }
}

/// Model and trading problem of a figure.
#[derive(Debug, Clone)]
pub struct FigureSetup {
    pub model: CoefficientModel,
    pub grid: TimeGrid,
    pub x: f64,
    pub d: f64,
}

pub fn figure_setup(name: FigureName) -> Result<FigureSetup> {
    let (model, steps) = match name {
        FigureName::LambertW => (CoefficientModel::constant(10.0, 1.0, 0.5, 0.0, 0.8)?, 10_000),
        FigureName::Jump => (
            CoefficientModel::new(
                5.0,
                1.0,
                vec![Piece::new(0.0, 0.3, 0.0, 0.0), Piece::new(4.0, 0.3, 1.0, 0.0)],
            )?,
            5_000,
        ),
        FigureName::NegRes => (CoefficientModel::constant(5.0, 1.0, -0.1, 0.5, 0.0)?, 5_000),
    };
    let grid = TimeGrid::over(model.horizon(), steps)?;
    Ok(FigureSetup { model, grid, x: 100.0, d: 0.0 })
}

/// Optimal plan on path 0 of `seed`.
pub fn figure_plan(setup: &FigureSetup, seed: u64) -> Result<OptimalPlan> {
    let solution = solve_y(&setup.model, &setup.grid)?;
    let market = simulate_path(&setup.model, &setup.grid, seed, 0)?;
    Ok(optimal_plan(&setup.model, &solution, &market, 0.0, setup.x, setup.d)?)
}

/// Shape checks that each figure is meant to show.
pub fn figure_checks(name: FigureName, model: &CoefficientModel, plan: &OptimalPlan) -> Vec<Check> {
    let n = plan.grid.n_steps();
    let d = &plan.d_star.values;
    let blocks = plan.block_trades(1e-12);
    let has_block = |k: usize| blocks.iter().any(|b| b.index == k);
    match name {
        FigureName::LambertW => vec![
            Check::new("initial_block_nonzero", (plan.x_star.values()[0] - plan.x).abs(), has_block(0)),
            Check::new("terminal_block_nonzero", plan.x_left(n).abs(), has_block(n)),
        ],
        FigureName::Jump => {
            let k0 = blocks.iter().map(|b| b.index).find(|&k| k > 0 && k < n).unwrap_or(0);
            let interior: Vec<usize> = blocks.iter().map(|b| b.index).filter(|&k| k > 0 && k < n).collect();
            let (early, late) = if k0 > 0 { (&d[..k0], &d[k0..n]) } else { (&d[..n], &d[..0]) };
            let spread = relative_spread(early).max(relative_spread(late));
            let distinct = k0 > 0 && (early[0] - late[0]).abs() > LEVEL_TOL * early[0].abs();
            vec![
                Check::new("interior_block_count", interior.len() as f64, interior.len() == 1),
                Check::close(
                    "interior_block_time",
                    plan.grid.time(k0),
                    jump_parameters(model).map_or(f64::NAN, |(_, t0)| t0),
                    1e-9,
                ),
                Check::at_most("d_star_level_spread", spread, LEVEL_TOL),
                Check::new("two_distinct_levels", if distinct { 2.0 } else { 1.0 }, distinct),
            ]
        }
        FigureName::NegRes => vec![Check::at_most("d_star_level_spread", relative_spread(&d[..n]), LEVEL_TOL)],
    }
}

pub struct FigureOutput {
    pub path: PathBuf,
    pub plan: OptimalPlan,
    pub checks: Vec<Check>,
}

pub fn write_figure(name: FigureName, plan: &OptimalPlan, out_dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let path = out_dir.join(format!("figure_{}.csv", name.as_str()));
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    write_plan(BufWriter::new(file), plan).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Writes `figure_<name>.csv` with the plan columns for one seeded path.
pub fn reproduce_figure(name: FigureName, out_dir: &Path, seed: u64) -> Result<FigureOutput> {
    let setup = figure_setup(name)?;
    let plan = figure_plan(&setup, seed)?;
    let checks = figure_checks(name, &setup.model, &plan);
    let path = write_figure(name, &plan, out_dir)?;
    Ok(FigureOutput { path, plan, checks })
}
