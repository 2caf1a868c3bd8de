//! Strategy constructors: the optimal plan built from a value solution, the
//! trivial benchmarks, and the two strategy families whose costs diverge
//! under the naive accountings.
//!
//! With `c = x - d / gamma_t` and `E = E(Q)_{t, .}` where
//!
//! ```text
//! dQ = -beta sigma dW - beta (mu + rho - sigma^2) ds,
//! ```
//!
//! the optimal position and deviation on `[t, T)` are `X* = c E (1 - beta)`
//! and `D* = -c E gamma beta`, with `D*_T = -c E_T gamma_T` after the final
//! block trade.

use serde::{Deserialize, Serialize};

use crate::bsde::ValueSolution;
use crate::coefficients::{stochastic_exponential, CoefficientModel, MarketPath, TimeGrid};
use crate::deviation::{recurse_deviation, DeviationPath, Strategy};
use crate::error::{ModelError, Result};

/// Below this `|rho + mu|` the feedback ratio vanishes identically.
const TINY_RATE: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalPlan {
    pub grid: TimeGrid,
    pub x: f64,
    pub d: f64,
    /// `x - d / gamma_t`, the constant ratio of impact state to `E(Q)`.
    pub scale: f64,
    pub q_increments: Vec<f64>,
    pub q_quadratic: Vec<f64>,
    pub exp_q: Vec<f64>,
    pub x_star: Strategy,
    pub d_star: DeviationPath,
    /// Right-continuous feedback ratio.
    pub beta: Vec<f64>,
    /// Left limits of the feedback ratio.
    pub beta_left: Vec<f64>,
    pub gamma: Vec<f64>,
    pub alpha: Vec<f64>,
}

/// A block trade of the continuous-time plan at grid point `index`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockTrade {
    pub index: usize,
    pub t: f64,
    pub size: f64,
}

impl OptimalPlan {
    /// Position just before grid point `k` in continuous time.
    pub fn x_left(&self, k: usize) -> f64 {
        if k == 0 {
            self.x
        } else {
            self.scale * self.exp_q[k] * (1.0 - self.beta_left[k])
        }
    }

    /// Deviation just before grid point `k` in continuous time.
    pub fn d_left(&self, k: usize) -> f64 {
        if k == 0 {
            self.d
        } else {
            -self.scale * self.exp_q[k] * self.gamma[k] * self.beta_left[k]
        }
    }

    /// Jumps of the continuous-time position: the initial trade, trades where
    /// the feedback ratio jumps, and the terminal trade. Jumps smaller than
    /// `tol` times the position scale are dropped.
    pub fn block_trades(&self, tol: f64) -> Vec<BlockTrade> {
        let n = self.grid.n_steps();
        let magnitude = self.x.abs().max(self.scale.abs()).max(f64::MIN_POSITIVE);
        (0..=n)
            .map(|k| {
                let after = self.x_star.values()[k];
                BlockTrade {
                    index: k,
                    t: self.grid.time(k),
                    size: after - self.x_left(k),
                }
            })
            .filter(|b| b.size.abs() > tol * magnitude)
            .collect()
    }

    /// `max |(X* - alpha D*) / E(Q) - c| / |c|` over the grid.
    pub fn impact_state_drift(&self) -> f64 {
        let c = self.scale;
        if c == 0.0 {
            return 0.0;
        }
        (0..self.grid.n_points())
            .map(|k| {
                let a = self.x_star.values()[k] - self.alpha[k] * self.d_star.values[k];
                (a / self.exp_q[k] - c).abs() / c.abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Increments of `Q` and of `[Q]` per step. The drift integral is exact for
/// a value solution of the ODE, via `(log Y)' = (rho + mu) beta - mu`; the
/// Brownian integral uses the left-point feedback ratio.
fn q_series(
    model: &CoefficientModel,
    solution: &ValueSolution,
    market: &MarketPath,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let coeffs = model.on_grid(&market.grid)?;
    let h = market.grid.h();
    let n = market.grid.n_steps();
    let mut inc = Vec::with_capacity(n);
    let mut quad = Vec::with_capacity(n);
    for k in 0..n {
        let p = coeffs.step(k);
        let beta = solution.beta_tilde[k];
        let rate = p.rho + p.mu;
        let (weighted, plain) = if rate.abs() < TINY_RATE {
            (0.0, 0.0)
        } else {
            let weighted = (solution.y[k + 1] / solution.y[k]).ln() + p.mu * h;
            (weighted, weighted / rate)
        };
        let drift = weighted - p.sigma * p.sigma * plain;
        inc.push(-beta * p.sigma * market.w[k] - drift);
        quad.push(beta * beta * p.sigma * p.sigma * h);
    }
    Ok((inc, quad))
}

/// Optimal plan from time `t` (a grid point) with position `x` and deviation
/// `d` just before `t`.
pub fn optimal_plan(
    model: &CoefficientModel,
    value_solution: &ValueSolution,
    market: &MarketPath,
    t: f64,
    x: f64,
    d: f64,
) -> Result<OptimalPlan> {
    if !value_solution.grid.same_as(&market.grid) {
        return Err(ModelError::GridMismatch);
    }
    let k0 = market.grid.index_of(t).ok_or(ModelError::TimeOffGrid(t))?;
    if k0 > 0 {
        let market = market.tail(k0)?;
        let solution = value_solution.tail(k0)?;
        return optimal_plan(model, &solution, &market, t, x, d);
    }

    let grid = market.grid;
    let n = grid.n_steps();
    let (q_increments, q_quadratic) = q_series(model, value_solution, market)?;
    let exp_q = stochastic_exponential(&q_increments, &q_quadratic);
    let gamma = market.gamma.clone();
    let beta = value_solution.beta_tilde.clone();
    let beta_left = value_solution.beta_left.clone();
    let scale = x - d / gamma[0];

    let mut xs: Vec<f64> = (0..n).map(|k| scale * exp_q[k] * (1.0 - beta[k])).collect();
    xs.push(0.0);
    let mut ds: Vec<f64> = (0..n).map(|k| -scale * exp_q[k] * gamma[k] * beta[k]).collect();
    ds.push(-scale * exp_q[n] * gamma[n]);
    let x_star = Strategy::new(grid, x, xs)?;

    let mut pre_trade = Vec::with_capacity(n + 1);
    pre_trade.push(d);
    for k in 1..=n {
        pre_trade.push(ds[k] - gamma[k] * x_star.trade(k));
    }
    let impact_state = x_star
        .values()
        .iter()
        .zip(&ds)
        .zip(&market.alpha)
        .map(|((x, d), a)| x - a * d)
        .collect();
    let d_star = DeviationPath {
        grid,
        d_pre: d,
        values: ds,
        pre_trade,
        impact_state,
    };

    Ok(OptimalPlan {
        grid,
        x,
        d,
        scale,
        q_increments,
        q_quadratic,
        exp_q,
        x_star,
        d_star,
        beta,
        beta_left,
        gamma,
        alpha: market.alpha.clone(),
    })
}

/// Sells everything at `t` and holds nothing afterwards. The strategy lives
/// on the part of `grid` from `t` on.
pub fn immediate_close(grid: &TimeGrid, t: f64, x: f64) -> Result<Strategy> {
    let k = grid.index_of(t).ok_or(ModelError::TimeOffGrid(t))?;
    let grid = if k == 0 { *grid } else { grid.tail(k)? };
    Strategy::new(grid, x, vec![0.0; grid.n_points()])
}

/// Keeps the position until the horizon and closes it in one block.
pub fn hold_then_close(grid: &TimeGrid, x: f64) -> Result<Strategy> {
    Strategy::new(*grid, x, vec![x; grid.n_points()])
}

fn interior_diffusive(n_points: usize) -> Vec<bool> {
    let mut mask = vec![true; n_points];
    mask[0] = false;
    mask[n_points - 1] = false;
    mask
}

/// `X = nu W` on `(0, T)` started from an empty position, closed at `T`.
pub fn counterexample_brownian(nu: f64, market: &MarketPath) -> Result<Strategy> {
    let values = market.brownian().iter().map(|w| nu * w).collect();
    Strategy::new(market.grid, 0.0, values)?.with_diffusive(interior_diffusive(market.grid.n_points()))
}

/// `X = x E(nu W)` on `[0, T)`, stepped by exact geometric increments and
/// closed at `T`.
pub fn counterexample_gbm_strategy(nu: f64, x: f64, market: &MarketPath) -> Result<Strategy> {
    let h = market.grid.h();
    let mut values = Vec::with_capacity(market.grid.n_points());
    let mut v = x;
    values.push(v);
    for dw in &market.w {
        v *= (nu * dw - 0.5 * nu * nu * h).exp();
        values.push(v);
    }
    Strategy::new(market.grid, x, values)?.with_diffusive(interior_diffusive(market.grid.n_points()))
}

/// Deviation driven by `gamma dX` without the covariation between impact and
/// position: diffusive trades use the impact at the start of their step.
pub fn naive_deviation_path(
    model: &CoefficientModel,
    market: &MarketPath,
    strategy: &Strategy,
    d_pre: f64,
) -> Result<DeviationPath> {
    let mask = strategy.diffusive();
    recurse_deviation(model, market, strategy, d_pre, |k| {
        if k > 0 && mask[k] {
            market.gamma[k - 1]
        } else {
            market.gamma[k]
        }
    })
}

/// The geometric strategy together with its naive deviation.
pub fn counterexample_gbm(
    model: &CoefficientModel,
    nu: f64,
    x: f64,
    market: &MarketPath,
) -> Result<(Strategy, DeviationPath)> {
    let strategy = counterexample_gbm_strategy(nu, x, market)?;
    let deviation = naive_deviation_path(model, market, &strategy, 0.0)?;
    Ok((strategy, deviation))
}

/// Regimes with a closed-form feedback ratio and `sigma = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BetaExample {
    /// `mu = 0` before `t0` and `mu = 1` from `t0` on.
    Jump { rho: f64, t0: f64 },
    /// Constant `rho` (possibly negative) and `mu`.
    NegRes { rho: f64, mu: f64 },
}

/// Feedback ratio of `example` on `grid`, straight from its closed form.
pub fn example_beta_path(example: BetaExample, horizon: f64, grid: &TimeGrid) -> Result<Vec<f64>> {
    match example {
        BetaExample::Jump { rho, t0 } => {
            let late = |s: f64| {
                (2.0 * rho + 1.0)
                    / (2.0 * (rho + 1.0) * (rho + 1.0) - 2.0 * rho * rho * (s - horizon).exp())
            };
            let k0 = grid.index_of(t0).ok_or(ModelError::BreakpointOffGrid(t0))?;
            let y_t0 = late(t0);
            Ok((0..grid.n_points())
                .map(|k| {
                    let s = grid.time(k);
                    if k >= k0 {
                        late(s) * (1.0 + 1.0 / (2.0 * rho + 1.0))
                    } else {
                        1.0 / (1.0 / y_t0 + (t0 - s) * rho)
                    }
                })
                .collect())
        }
        BetaExample::NegRes { rho, mu } => Ok(grid
            .times()
            .iter()
            .map(|&s| {
                mu * (rho + mu) / ((rho + mu) * (rho + mu) - rho * rho * (mu * (s - horizon)).exp())
            })
            .collect()),
    }
}

/// Whether the plan trades a block at its start, with the sign of that block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitialBlock {
    None,
    Buy,
    Sell,
}

/// The initial block vanishes exactly when `d = -beta_t gamma_t x / (1 - beta_t)`.
/// Compared at relative tolerance `1e-12`.
pub fn classify_initial_block(plan: &OptimalPlan) -> InitialBlock {
    let size = plan.x_star.values()[0] - plan.x;
    let magnitude = plan.x.abs().max((plan.d / plan.gamma[0]).abs()).max(f64::MIN_POSITIVE);
    if size.abs() <= 1e-12 * magnitude {
        InitialBlock::None
    } else if size > 0.0 {
        InitialBlock::Buy
    } else {
        InitialBlock::Sell
    }
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Rebuilds the plan at `u` from the left limits `(X*_{u-}, D*_{u-})` and
/// returns the largest relative gap to the original plan on `[u, T]`, over
/// both position and deviation.
pub fn dynamic_consistency_check(
    model: &CoefficientModel,
    value_solution: &ValueSolution,
    market: &MarketPath,
    plan: &OptimalPlan,
    u: f64,
) -> Result<f64> {
    let ku = plan.grid.index_of(u).ok_or(ModelError::TimeOffGrid(u))?;
    if ku >= plan.grid.n_steps() {
        return Err(ModelError::Precondition(format!(
            "restart time {u} must lie before the horizon"
        )));
    }
    let k_market = market
        .grid
        .index_of(plan.grid.t0())
        .ok_or(ModelError::GridMismatch)?;
    let market = if k_market == 0 { market.clone() } else { market.tail(k_market)? };
    let solution = if k_market == 0 {
        value_solution.clone()
    } else {
        value_solution.tail(k_market)?
    };
    let restarted = optimal_plan(
        model,
        &solution,
        &market,
        plan.grid.time(ku),
        plan.x_left(ku),
        plan.d_left(ku),
    )?;
    let mut worst = 0.0f64;
    for j in 0..restarted.grid.n_points() {
        let k = ku + j;
        worst = worst
            .max(relative_gap(plan.x_star.values()[k], restarted.x_star.values()[j]))
            .max(relative_gap(plan.d_star.values[k], restarted.d_star.values[j]));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsde::{solve_y_constant, solve_y_jump, solve_y_lambert, solve_y_ow};
    use crate::coefficients::{simulate_path, Piece};

    #[test]
    fn ow_plan_matches_closed_form() {
        let m = CoefficientModel::constant(10.0, 1.0, 0.5, 0.0, 0.0).unwrap();
        let g = TimeGrid::over(10.0, 1000).unwrap();
        let p = simulate_path(&m, &g, 0, 0).unwrap();
        let sol = solve_y_ow(&m, &g).unwrap();
        let plan = optimal_plan(&m, &sol, &p, 0.0, 1.0, 0.0).unwrap();
        for k in 0..1000 {
            let s = g.time(k);
            let expected = (1.0 + (10.0 - s) * 0.5) / 7.0;
            assert!((plan.x_star.values()[k] - expected).abs() < 1e-12);
        }
        assert!((plan.x_star.values()[0] - 6.0 / 7.0).abs() < 1e-14);
        assert!((plan.x_left(1000) - 1.0 / 7.0).abs() < 1e-12);
        let d0 = plan.d_star.values[0];
        for k in 0..1000 {
            assert!((plan.d_star.values[k] - d0).abs() <= 1e-10 * d0.abs());
        }
        assert!(plan.impact_state_drift() < 1e-12);
        let blocks = plan.block_trades(1e-12);
        assert_eq!(blocks.iter().map(|b| b.index).collect::<Vec<_>>(), vec![0, 1000]);
    }

    #[test]
    fn closing_position_gives_empty_plan() {
        let m = CoefficientModel::constant(2.0, 2.0, 0.5, 0.0, 0.6).unwrap();
        let g = TimeGrid::over(2.0, 200).unwrap();
        let p = simulate_path(&m, &g, 1, 2).unwrap();
        let sol = solve_y_lambert(&m, &g).unwrap();
        let plan = optimal_plan(&m, &sol, &p, 0.0, 1.5, 3.0).unwrap();
        assert!(plan.x_star.values().iter().all(|&v| v == 0.0));
        assert!(plan.d_star.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn without_resilience_plan_closes_immediately() {
        let m = CoefficientModel::constant(1.0, 1.0, 0.0, 0.3, 0.4).unwrap();
        let g = TimeGrid::over(1.0, 100).unwrap();
        let p = simulate_path(&m, &g, 4, 0).unwrap();
        let sol = solve_y_constant(&m, &g).unwrap();
        let plan = optimal_plan(&m, &sol, &p, 0.0, 2.0, 0.5).unwrap();
        assert_eq!(plan.x_star, immediate_close(&g, 0.0, 2.0).unwrap());
    }

    #[test]
    fn jump_plan_blocks() {
        let m = CoefficientModel::new(
            5.0,
            1.0,
            vec![Piece::new(0.0, 0.3, 0.0, 0.0), Piece::new(4.0, 0.3, 1.0, 0.0)],
        )
        .unwrap();
        let g = TimeGrid::over(5.0, 500).unwrap();
        let p = simulate_path(&m, &g, 0, 0).unwrap();
        let sol = solve_y_jump(&m, &g).unwrap();
        let plan = optimal_plan(&m, &sol, &p, 0.0, 100.0, 0.0).unwrap();
        let idx: Vec<usize> = plan.block_trades(1e-12).iter().map(|b| b.index).collect();
        assert_eq!(idx, vec![0, 400, 500]);
        let beta = example_beta_path(BetaExample::Jump { rho: 0.3, t0: 4.0 }, 5.0, &g).unwrap();
        for (a, b) in beta.iter().zip(&plan.beta) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn initial_block_vanishes_on_the_critical_deviation() {
        let m = CoefficientModel::new(
            5.0,
            1.0,
            vec![Piece::new(0.0, 0.3, 0.0, 0.0), Piece::new(4.0, 0.3, 1.0, 0.0)],
        )
        .unwrap();
        let g = TimeGrid::over(5.0, 500).unwrap();
        let p = simulate_path(&m, &g, 0, 0).unwrap();
        let sol = solve_y_jump(&m, &g).unwrap();
        let b0 = sol.beta_tilde[0];
        let d = -b0 * 100.0 / (1.0 - b0);
        let plan = optimal_plan(&m, &sol, &p, 0.0, 100.0, d).unwrap();
        assert_eq!(classify_initial_block(&plan), InitialBlock::None);
        let plan = optimal_plan(&m, &sol, &p, 0.0, 100.0, 0.0).unwrap();
        assert_eq!(classify_initial_block(&plan), InitialBlock::Sell);
    }

    #[test]
    fn consistency_at_start_is_exact() {
        let m = CoefficientModel::constant(2.0, 1.0, 0.5, 0.0, 0.8).unwrap();
        let g = TimeGrid::over(2.0, 100).unwrap();
        let p = simulate_path(&m, &g, 9, 3).unwrap();
        let sol = solve_y_lambert(&m, &g).unwrap();
        let plan = optimal_plan(&m, &sol, &p, 0.0, 1.0, 0.2).unwrap();
        assert_eq!(dynamic_consistency_check(&m, &sol, &p, &plan, 0.0).unwrap(), 0.0);
        assert!(dynamic_consistency_check(&m, &sol, &p, &plan, 1.0).unwrap() < 1e-10);
    }

    #[test]
    fn brownian_counterexample_shape() {
        let m = CoefficientModel::constant(1.0, 1.0, 0.05, 0.0, 0.0).unwrap();
        let g = TimeGrid::over(1.0, 10).unwrap();
        let p = simulate_path(&m, &g, 0, 0).unwrap();
        let s = counterexample_brownian(0.0, &p).unwrap();
        assert!(s.values().iter().all(|&v| v == 0.0));
        let s = counterexample_brownian(2.0, &p).unwrap();
        assert_eq!(s.x_pre(), 0.0);
        assert_eq!(s.values()[0], 0.0);
        assert_eq!(s.values()[10], 0.0);
        assert!((s.values()[5] - 2.0 * p.brownian()[5]).abs() < 1e-15);
        assert!(!s.is_finite_variation());
    }

    #[test]
    fn gbm_counterexample_without_volatility_holds() {
        let m = CoefficientModel::constant(1.0, 1.0, 0.5, 0.0, 0.3).unwrap();
        let g = TimeGrid::over(1.0, 10).unwrap();
        let p = simulate_path(&m, &g, 0, 0).unwrap();
        let (s, dev) = counterexample_gbm(&m, 0.0, 1.0, &p).unwrap();
        assert_eq!(s, hold_then_close(&g, 1.0).unwrap().with_diffusive(s.diffusive().to_vec()).unwrap());
        assert!(dev.pre_trade[..10].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn negres_beta_above_one() {
        let g = TimeGrid::over(5.0, 5000).unwrap();
        let beta = example_beta_path(BetaExample::NegRes { rho: -0.1, mu: 0.5 }, 5.0, &g).unwrap();
        assert!(beta.iter().all(|&b| b > 1.25));
        let h = g.h();
        for k in 1..5000 {
            let slope = (beta[k + 1] - beta[k - 1]) / (2.0 * h);
            let rhs = 0.4 * beta[k] * beta[k] - 0.5 * beta[k];
            assert!((slope - rhs).abs() < 1e-6);
        }
    }
}
