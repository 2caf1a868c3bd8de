//! Execution costs: pathwise grid costs, Monte Carlo estimates, the value
//! function and the closed-form costs of the two divergent strategy families.

use serde::{Deserialize, Serialize};

use crate::bsde::ValueSolution;
use crate::coefficients::{CoefficientModel, MarketPath, MarketSimulator, TimeGrid};
use crate::deviation::{deviation_path, DeviationPath, Strategy};
use crate::error::{ModelError, Result};
use crate::mc;
use crate::strategy::naive_deviation_path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub h: f64,
    pub seed: u64,
    pub model_hash: String,
}

impl CostEstimate {
    /// `|mean - reference|` in units of the standard error.
    pub fn z_score(&self, reference: f64) -> f64 {
        if self.std_error == 0.0 {
            if self.mean == reference {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - reference).abs() / self.std_error
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueQuote {
    pub v: f64,
    pub y_t: f64,
    pub gamma_t: f64,
    pub x: f64,
    pub d: f64,
}

/// `V = (y / gamma) (d - gamma x)^2 - d^2 / (2 gamma)`.
pub fn value_function(y_t: f64, gamma_t: f64, x: f64, d: f64) -> Result<ValueQuote> {
    if !(gamma_t > 0.0) {
        return Err(ModelError::NonPositiveImpact(gamma_t));
    }
    let gap = d - gamma_t * x;
    let v = y_t / gamma_t * gap * gap - d * d / (2.0 * gamma_t);
    Ok(ValueQuote { v, y_t, gamma_t, x, d })
}

fn check_pair(strategy: &Strategy, deviation: &DeviationPath, market: &MarketPath) -> Result<()> {
    if strategy.grid().same_as(&market.grid) && deviation.grid.same_as(&market.grid) {
        Ok(())
    } else {
        Err(ModelError::GridMismatch)
    }
}

/// `sum_k (D_k- + gamma_k xi_k / 2) xi_k`, including the initial and the
/// terminal block trade.
pub fn pathwise_cost(strategy: &Strategy, deviation: &DeviationPath, market: &MarketPath) -> Result<f64> {
    check_pair(strategy, deviation, market)?;
    let terms: Vec<f64> = (0..market.grid.n_points())
        .map(|k| {
            let xi = strategy.trade(k);
            (deviation.pre_trade[k] + 0.5 * market.gamma[k] * xi) * xi
        })
        .collect();
    Ok(mc::pairwise_sum(&terms))
}

/// Cost without the quadratic charge on trades flagged as diffusive, i.e.
/// without the `(gamma/2) d[X]` term for the continuous martingale part.
/// Equal to `pathwise_cost` for finite-variation strategies.
pub fn pathwise_cost_naive(strategy: &Strategy, deviation: &DeviationPath, market: &MarketPath) -> Result<f64> {
    check_pair(strategy, deviation, market)?;
    let terms: Vec<f64> = (0..market.grid.n_points())
        .map(|k| {
            let xi = strategy.trade(k);
            if strategy.diffusive()[k] {
                deviation.pre_trade[k] * xi
            } else {
                (deviation.pre_trade[k] + 0.5 * market.gamma[k] * xi) * xi
            }
        })
        .collect();
    Ok(mc::pairwise_sum(&terms))
}

/// How a path's cost is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Accounting {
    /// Grid deviation with end-of-step impact and the full quadratic charge.
    Standard,
    /// Standard deviation, no quadratic charge on diffusive trades.
    NaiveCost,
    /// Deviation without the impact/position covariation, full charge.
    NaiveDynamics,
}

/// Cost of one strategy on one path under the chosen accounting.
pub fn path_cost(
    model: &CoefficientModel,
    market: &MarketPath,
    strategy: &Strategy,
    d_pre: f64,
    accounting: Accounting,
) -> Result<f64> {
    match accounting {
        Accounting::Standard => {
            let dev = deviation_path(model, market, strategy, d_pre)?;
            pathwise_cost(strategy, &dev, market)
        }
        Accounting::NaiveCost => {
            let dev = deviation_path(model, market, strategy, d_pre)?;
            pathwise_cost_naive(strategy, &dev, market)
        }
        Accounting::NaiveDynamics => {
            let dev = naive_deviation_path(model, market, strategy, d_pre)?;
            pathwise_cost(strategy, &dev, market)
        }
    }
}

/// Monte Carlo mean and standard error of the cost of `strategy_factory`'s
/// strategies over `n_paths` independent paths.
pub fn estimate_cost<F>(
    model: &CoefficientModel,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
    strategy_factory: F,
    d_pre: f64,
    accounting: Accounting,
) -> Result<CostEstimate>
where
    F: Fn(&MarketPath) -> Result<Strategy> + Sync + Send,
{
    if n_paths < 2 {
        return Err(ModelError::Precondition(format!(
            "cost estimate needs at least 2 paths, got {n_paths}"
        )));
    }
    let sim = MarketSimulator::new(model, grid)?;
    let costs = mc::map_paths(n_paths, |i| {
        let market = sim.path(seed, i as u64);
        let strategy = strategy_factory(&market)?;
        path_cost(model, &market, &strategy, d_pre, accounting)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let stats = mc::sample_stats(&costs);
    Ok(CostEstimate {
        mean: stats.mean,
        std_error: stats.std_error,
        n_paths,
        h: grid.h(),
        seed,
        model_hash: model.model_hash(),
    })
}

/// Pathwise value of
///
/// ```text
/// (Y_t / gamma_t)(d - gamma_t x)^2 - d^2 / (2 gamma_t)
///   + int (1/gamma) (beta (gamma X - D) + D)^2 (sigma^2 Y + (2 rho + mu - sigma^2)/2) ds
/// ```
///
/// with a left-point Riemann sum for the integral. Its mean over paths is
/// the expected cost of the strategy.
pub fn quadratic_representation_rhs(
    model: &CoefficientModel,
    value_solution: &ValueSolution,
    market: &MarketPath,
    strategy: &Strategy,
    deviation: &DeviationPath,
) -> Result<f64> {
    check_pair(strategy, deviation, market)?;
    if !value_solution.grid.same_as(&market.grid) {
        return Err(ModelError::GridMismatch);
    }
    let coeffs = model.on_grid(&market.grid)?;
    let h = market.grid.h();
    let n = market.grid.n_steps();
    let terms: Vec<f64> = (0..n)
        .map(|k| {
            let p = coeffs.step(k);
            let g = market.gamma[k];
            let x = strategy.values()[k];
            let d = deviation.values[k];
            let y = value_solution.y[k];
            let inner = value_solution.beta_tilde[k] * (g * x - d) + d;
            inner * inner / g * (p.sigma * p.sigma * y + 0.5 * p.positivity()) * h
        })
        .collect();
    let head = value_function(value_solution.y[0], market.gamma[0], strategy.x_pre(), deviation.d_pre)?;
    Ok(head.v + mc::pairwise_sum(&terms))
}

/// Expected cost of `X = nu W` under the cost functional without the
/// quadratic-variation charge, for constant `gamma` and `rho`:
/// `(gamma nu^2 / rho)(e^{-rho T} - 1 + rho T / 2)`.
pub fn closed_form_tilde_j(gamma: f64, rho: f64, horizon: f64, nu: f64) -> Result<f64> {
    if rho == 0.0 {
        return Err(ModelError::Precondition("closed form needs rho != 0".into()));
    }
    Ok(gamma * nu * nu / rho * ((-rho * horizon).exp_m1() + 0.5 * rho * horizon))
}

/// Expected cost of the geometric strategy `X = x E(nu W)` when the deviation
/// ignores the impact/position covariation, with `gamma` a driftless
/// geometric Brownian motion of volatility `sigma`.
pub fn closed_form_j_gbm(gamma0: f64, x: f64, sigma: f64, rho: f64, horizon: f64, nu: f64) -> Result<f64> {
    if !(2.0 * rho - sigma * sigma > 0.0) {
        return Err(ModelError::Precondition(format!(
            "closed form needs 2 rho - sigma^2 > 0, got {}",
            2.0 * rho - sigma * sigma
        )));
    }
    if nu == 0.0 {
        return Err(ModelError::SingularParameter {
            nu,
            reason: "nu = 0 is a removable singularity; the limit is gamma0 x^2 / 2",
        });
    }
    let growth = nu * nu + 2.0 * sigma * nu;
    if growth == 0.0 {
        return Err(ModelError::SingularParameter {
            nu,
            reason: "nu = -2 sigma makes nu^2 + 2 sigma nu vanish",
        });
    }
    let shifted = rho + growth;
    if shifted == 0.0 {
        return Err(ModelError::SingularParameter {
            nu,
            reason: "nu^2 + 2 sigma nu + rho vanishes",
        });
    }
    let nu2 = nu * nu;
    let i1 = (growth * horizon).exp() * (nu2 / growth - 2.0 * nu2 / shifted + 1.0);
    let i2 = nu2 / growth - 2.0 * nu2 * (-rho * horizon).exp() / shifted;
    Ok(0.5 * gamma0 * x * x * (i1 - i2))
}
