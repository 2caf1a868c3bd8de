//! Grid strategies and the price deviation they cause.
//!
//! On each grid interval the deviation decays by `exp(-int rho)`, and a trade
//! `xi_k` at grid point `k` moves it by `gamma_k * xi_k`. Using the impact
//! value at the end of the interval is what produces the covariation between
//! impact and position in the continuous limit.

use serde::Serialize;

use crate::coefficients::{CoefficientModel, MarketPath, TimeGrid};
use crate::error::{ModelError, Result};
use crate::mc::{self, SampleStats};

/// Position path on a grid. `values[k]` is the position right after the
/// trade at grid point `k`; the last value is always 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    grid: TimeGrid,
    x_pre: f64,
    values: Vec<f64>,
    /// Trades that are increments of a continuous martingale part rather
    /// than block trades. Only the naive accountings look at this.
    diffusive: Vec<bool>,
}

impl Strategy {
    /// Builds a strategy from `n_steps + 1` grid values; the terminal value is
    /// overwritten with 0 so the position is always closed.
    pub fn new(grid: TimeGrid, x_pre: f64, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(ModelError::Precondition(format!(
                "strategy has {} values for a grid with {} points",
                values.len(),
                grid.n_points()
            )));
        }
        if let Some(last) = values.last_mut() {
            *last = 0.0;
        }
        let diffusive = vec![false; values.len()];
        Ok(Self { grid, x_pre, values, diffusive })
    }

    /// Marks which trades belong to a continuous martingale part.
    pub fn with_diffusive(mut self, diffusive: Vec<bool>) -> Result<Self> {
        if diffusive.len() != self.values.len() {
            return Err(ModelError::GridMismatch);
        }
        self.diffusive = diffusive;
        Ok(self)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn x_pre(&self) -> f64 {
        self.x_pre
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn diffusive(&self) -> &[bool] {
        &self.diffusive
    }

    pub fn is_finite_variation(&self) -> bool {
        !self.diffusive.iter().any(|&d| d)
    }

    /// Position just before grid point `k`.
    pub fn before(&self, k: usize) -> f64 {
        if k == 0 {
            self.x_pre
        } else {
            self.values[k - 1]
        }
    }

    pub fn trade(&self, k: usize) -> f64 {
        self.values[k] - self.before(k)
    }

    pub fn trades(&self) -> Vec<f64> {
        (0..self.values.len()).map(|k| self.trade(k)).collect()
    }

    /// The same strategy with every position multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            grid: self.grid,
            x_pre: factor * self.x_pre,
            values: self.values.iter().map(|v| factor * v).collect(),
            diffusive: self.diffusive.clone(),
        }
    }

    /// Sum of squared trades over `(t0, T)`, excluding the initial and
    /// terminal block trades.
    pub fn interior_quadratic_variation(&self) -> f64 {
        let n = self.values.len() - 1;
        (1..n).map(|k| self.trade(k).powi(2)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationPath {
    pub grid: TimeGrid,
    pub d_pre: f64,
    /// Deviation right after the trade at each grid point.
    pub values: Vec<f64>,
    /// Deviation right before the trade at each grid point.
    pub pre_trade: Vec<f64>,
    /// `X - alpha D` at each grid point.
    pub impact_state: Vec<f64>,
}

impl DeviationPath {
    /// `values[k] - pre_trade[k]`.
    pub fn jump(&self, k: usize) -> f64 {
        self.values[k] - self.pre_trade[k]
    }
}

fn check_shared_grid(strategy: &Strategy, market: &MarketPath) -> Result<()> {
    if strategy.grid.same_as(&market.grid) {
        Ok(())
    } else {
        Err(ModelError::GridMismatch)
    }
}

/// Shared recursion; `impact(k)` is the impact factor applied to trade `k`.
pub(crate) fn recurse_deviation(
    model: &CoefficientModel,
    market: &MarketPath,
    strategy: &Strategy,
    d_pre: f64,
    impact: impl Fn(usize) -> f64,
) -> Result<DeviationPath> {
    check_shared_grid(strategy, market)?;
    let decays = model.on_grid(&market.grid)?.resilience_decays();
    let n = market.grid.n_steps();
    let mut values = Vec::with_capacity(n + 1);
    let mut pre_trade = Vec::with_capacity(n + 1);
    let mut pre = d_pre;
    for k in 0..=n {
        pre_trade.push(pre);
        let d = pre + impact(k) * strategy.trade(k);
        values.push(d);
        if k < n {
            pre = d * decays[k];
        }
    }
    let impact_state = strategy
        .values
        .iter()
        .zip(&values)
        .zip(&market.alpha)
        .map(|((x, d), a)| x - a * d)
        .collect();
    Ok(DeviationPath {
        grid: market.grid,
        d_pre,
        values,
        pre_trade,
        impact_state,
    })
}

/// Deviation caused by `strategy` on `market`, starting from `d_pre`.
pub fn deviation_path(
    model: &CoefficientModel,
    market: &MarketPath,
    strategy: &Strategy,
    d_pre: f64,
) -> Result<DeviationPath> {
    recurse_deviation(model, market, strategy, d_pre, |k| market.gamma[k])
}

/// `X - alpha D` at each grid point.
pub fn impact_state(strategy: &Strategy, deviation: &DeviationPath, market: &MarketPath) -> Vec<f64> {
    strategy
        .values
        .iter()
        .zip(&deviation.values)
        .zip(&market.alpha)
        .map(|((x, d), a)| x - a * d)
        .collect()
}

/// Monte Carlo estimates of the three integrability quantities at the grid
/// start. These are sample averages over finitely many paths and certify
/// nothing; they flag strategies whose moments blow up.
#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport {
    /// `sup_s gamma^2 (X - alpha D)^4`.
    pub sup_impact_state: SampleStats,
    /// `(int gamma^2 (X - alpha D)^4 sigma^2 ds)^(1/2)`.
    pub impact_state_volatility: SampleStats,
    /// `(int D^4 alpha^2 sigma^2 ds)^(1/2)`.
    pub deviation_volatility: SampleStats,
    pub n_paths: usize,
    pub diagnostic_only: bool,
}

pub fn admissibility_diagnostics<F>(
    model: &CoefficientModel,
    markets: &[MarketPath],
    strategy_factory: F,
    d_pre: f64,
) -> Result<AdmissibilityReport>
where
    F: Fn(&MarketPath) -> Result<Strategy> + Sync + Send,
{
    if markets.len() < 100 {
        return Err(ModelError::Precondition(format!(
            "admissibility diagnostics need at least 100 paths, got {}",
            markets.len()
        )));
    }
    let coeffs = model.on_grid(&markets[0].grid)?;
    let per_path = mc::map_paths(markets.len(), |i| -> Result<[f64; 3]> {
        let market = &markets[i];
        let strategy = strategy_factory(market)?;
        let dev = deviation_path(model, market, &strategy, d_pre)?;
        let h = market.grid.h();
        let n = market.grid.n_steps();
        let mut sup = 0.0f64;
        let mut int_a = 0.0;
        let mut int_d = 0.0;
        for k in 0..=n {
            let g = market.gamma[k];
            let a4 = dev.impact_state[k].powi(4);
            sup = sup.max(g * g * a4);
            if k < n {
                let s2 = coeffs.step(k).sigma.powi(2);
                int_a += g * g * a4 * s2 * h;
                int_d += dev.values[k].powi(4) * market.alpha[k].powi(2) * s2 * h;
            }
        }
        Ok([sup, int_a.sqrt(), int_d.sqrt()])
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let column = |j: usize| mc::sample_stats(&per_path.iter().map(|r| r[j]).collect::<Vec<_>>());
    Ok(AdmissibilityReport {
        sup_impact_state: column(0),
        impact_state_volatility: column(1),
        deviation_volatility: column(2),
        n_paths: markets.len(),
        diagnostic_only: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{simulate_market, simulate_path};
    use proptest::prelude::{prop_assert, proptest};

    fn flat(rho: f64, gamma0: f64) -> (CoefficientModel, TimeGrid, MarketPath) {
        let m = CoefficientModel::constant(1.0, gamma0, rho, 0.0, 0.0).unwrap();
        let g = TimeGrid::over(1.0, 100).unwrap();
        let p = simulate_path(&m, &g, 0, 0).unwrap();
        (m, g, p)
    }

    #[test]
    fn zero_strategy_zero_deviation() {
        let (m, g, p) = flat(0.5, 1.0);
        let s = Strategy::new(g, 0.0, vec![0.0; 101]).unwrap();
        let d = deviation_path(&m, &p, &s, 0.0).unwrap();
        assert!(d.values.iter().chain(&d.pre_trade).all(|&v| v == 0.0));
        assert!(d.impact_state.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn block_trade_moves_deviation_by_impact() {
        let (m, g, p) = flat(0.5, 2.0);
        let s = Strategy::new(g, 1.0, vec![0.0; 101]).unwrap();
        let d = deviation_path(&m, &p, &s, 0.0).unwrap();
        assert_eq!(d.values[0], -2.0);
        assert_eq!(d.jump(0), 2.0 * s.trade(0));
    }

    #[test]
    fn free_decay_is_exponential() {
        let (m, g, p) = flat(1.0, 1.0);
        let s = Strategy::new(g, 0.0, vec![0.0; 101]).unwrap();
        let d = deviation_path(&m, &p, &s, 1.0).unwrap();
        for k in 0..=100 {
            assert!((d.pre_trade[k] - (-g.time(k)).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn terminal_value_forced_to_zero() {
        let g = TimeGrid::over(1.0, 4).unwrap();
        let s = Strategy::new(g, 1.0, vec![1.0; 5]).unwrap();
        assert_eq!(s.values()[4], 0.0);
        assert_eq!(s.trade(4), -1.0);
        assert!(Strategy::new(g, 1.0, vec![1.0; 4]).is_err());
        let mut acc = s.x_pre();
        for (k, xi) in s.trades().iter().enumerate() {
            acc += xi;
            assert_eq!(acc, s.values()[k]);
        }
    }

    #[test]
    fn immediate_close_at_zero_impact_state() {
        let m = CoefficientModel::constant(1.0, 2.0, 0.5, 0.1, 0.4).unwrap();
        let g = TimeGrid::over(1.0, 50).unwrap();
        let p = simulate_path(&m, &g, 3, 1).unwrap();
        let s = Strategy::new(g, 1.5, vec![0.0; 51]).unwrap();
        let d = deviation_path(&m, &p, &s, 3.0).unwrap();
        assert!(d.impact_state.iter().all(|&a| a == 0.0));
        assert_eq!(impact_state(&s, &d, &p), d.impact_state);
    }

    #[test]
    fn grid_mismatch_rejected() {
        let (m, _, p) = flat(0.5, 1.0);
        let other = TimeGrid::over(1.0, 50).unwrap();
        let s = Strategy::new(other, 0.0, vec![0.0; 51]).unwrap();
        assert_eq!(deviation_path(&m, &p, &s, 0.0), Err(ModelError::GridMismatch));
    }

    #[test]
    fn admissibility_of_immediate_close() {
        let m = CoefficientModel::constant(1.0, 1.0, 0.5, 0.0, 0.5).unwrap();
        let g = TimeGrid::over(1.0, 20).unwrap();
        let markets = simulate_market(&m, &g, 100, 1).unwrap();
        let report = admissibility_diagnostics(
            &m,
            &markets,
            |mk| Strategy::new(mk.grid, 2.0, vec![0.0; 21]),
            2.0,
        )
        .unwrap();
        assert_eq!(report.sup_impact_state.mean, 0.0);
        assert_eq!(report.impact_state_volatility.mean, 0.0);
        assert_eq!(report.deviation_volatility.mean, 0.0);
        let few = admissibility_diagnostics(
            &m,
            &markets[..10],
            |mk| Strategy::new(mk.grid, 0.0, vec![0.0; 21]),
            0.0,
        );
        assert!(few.is_err());
    }

    proptest! {
        #[test]
        fn deviation_is_linear(
            lambda in -3.0f64..3.0,
            d_pre in -2.0f64..2.0,
            xs in proptest::collection::vec(-5.0f64..5.0, 41),
            seed in 0u64..1000,
        ) {
            let m = CoefficientModel::constant(2.0, 1.5, 0.4, 0.1, 0.6).unwrap();
            let g = TimeGrid::over(2.0, 40).unwrap();
            let p = simulate_path(&m, &g, seed, 0).unwrap();
            let s = Strategy::new(g, xs[0], xs.clone()).unwrap();
            let base = deviation_path(&m, &p, &s, d_pre).unwrap();
            let scaled = deviation_path(&m, &p, &s.scaled(lambda), lambda * d_pre).unwrap();
            for (a, b) in base.values.iter().zip(&scaled.values) {
                prop_assert!((lambda * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
            for k in 0..=40 {
                let jump = p.gamma[k] * s.trade(k);
                prop_assert!((base.jump(k) - jump).abs() <= 1e-12 * (1.0 + base.values[k].abs()));
            }
        }
    }
}
