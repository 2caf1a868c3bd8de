//! Market model: deterministic piecewise-constant resilience `rho`, impact
//! drift `mu` and impact volatility `sigma` on `[0, T]`, together with the
//! uniform time grid and the simulated impact paths.
//!
//! The driving martingale is a standard Brownian motion, so `d[M]_t = dt`.
//! The impact process is
//!
//! ```text
//! gamma_s = gamma_0 * exp( int_0^s (mu - sigma^2/2) du + int_0^s sigma dW )
//! ```
//!
//! and is stepped exactly on the grid (lognormal increments), never by Euler.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ModelError, Result};
use crate::mc;

/// Relative tolerance used when matching times against grid points.
const GRID_TOL: f64 = 1e-9;

/// One constant stretch of the coefficient functions, valid on
/// `[t_from, next t_from)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub t_from: f64,
    pub rho: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl Piece {
    pub fn new(t_from: f64, rho: f64, mu: f64, sigma: f64) -> Self {
        Self { t_from, rho, mu, sigma }
    }

    /// `2 rho + mu - sigma^2`, the quantity that must stay positive.
    pub fn positivity(&self) -> f64 {
        2.0 * self.rho + self.mu - self.sigma * self.sigma
    }
}

/// Which of the standing conditions hold, with the attained constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionReport {
    /// `2 rho + mu - sigma^2 > 0` everywhere.
    pub positive: bool,
    /// Largest `eps` with `2 rho + mu - sigma^2 >= eps` everywhere.
    pub epsilon: f64,
    /// Coefficients are bounded; always true for finitely many finite pieces.
    pub bounded: bool,
    pub rho_bound: f64,
    pub mu_bound: f64,
    pub sigma_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientModel {
    horizon: f64,
    gamma0: f64,
    pieces: Vec<Piece>,
    conditions: ConditionReport,
}

impl CoefficientModel {
    /// Validates the pieces and the positivity condition.
    pub fn new(horizon: f64, gamma0: f64, pieces: Vec<Piece>) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(ModelError::NonPositiveHorizon(horizon));
        }
        if !(gamma0 > 0.0 && gamma0.is_finite()) {
            return Err(ModelError::NonPositiveImpact(gamma0));
        }
        if pieces.is_empty() || pieces[0].t_from != 0.0 {
            return Err(ModelError::InvalidPieces);
        }
        for pair in pieces.windows(2) {
            if !(pair[1].t_from > pair[0].t_from) {
                return Err(ModelError::InvalidPieces);
            }
        }
        if pieces.last().is_none_or(|p| p.t_from >= horizon) {
            return Err(ModelError::InvalidPieces);
        }

        let mut epsilon = f64::INFINITY;
        let (mut rho_bound, mut mu_bound, mut sigma_bound) = (0.0f64, 0.0f64, 0.0f64);
        for p in &pieces {
            if !(p.rho.is_finite() && p.mu.is_finite() && p.sigma.is_finite()) {
                return Err(ModelError::NonFiniteCoefficient { t_from: p.t_from });
            }
            let value = p.positivity();
            if !(value > 0.0) {
                return Err(ModelError::PositivityViolated { t_from: p.t_from, value });
            }
            epsilon = epsilon.min(value);
            rho_bound = rho_bound.max(p.rho.abs());
            mu_bound = mu_bound.max(p.mu.abs());
            sigma_bound = sigma_bound.max(p.sigma.abs());
        }

        let conditions = ConditionReport {
            positive: true,
            epsilon,
            bounded: true,
            rho_bound,
            mu_bound,
            sigma_bound,
        };
        Ok(Self { horizon, gamma0, pieces, conditions })
    }

    /// Single-piece model with constant coefficients.
    pub fn constant(horizon: f64, gamma0: f64, rho: f64, mu: f64, sigma: f64) -> Result<Self> {
        Self::new(horizon, gamma0, vec![Piece::new(0.0, rho, mu, sigma)])
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn conditions(&self) -> &ConditionReport {
        &self.conditions
    }

    /// Interior breakpoints, i.e. the times where some coefficient may jump.
    pub fn breakpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.pieces.iter().skip(1).map(|p| p.t_from)
    }

    /// Right-continuous coefficient lookup.
    pub fn piece_at(&self, t: f64) -> &Piece {
        let idx = self.pieces.partition_point(|p| p.t_from <= t);
        &self.pieces[idx.saturating_sub(1)]
    }

    pub fn sigma_vanishes(&self) -> bool {
        self.pieces.iter().all(|p| p.sigma == 0.0)
    }

    pub fn mu_vanishes(&self) -> bool {
        self.pieces.iter().all(|p| p.mu == 0.0)
    }

    pub fn rho_vanishes(&self) -> bool {
        self.pieces.iter().all(|p| p.rho == 0.0)
    }

    /// Short content hash identifying the model in serialized results.
    pub fn model_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.horizon.to_le_bytes());
        hasher.update(self.gamma0.to_le_bytes());
        for p in &self.pieces {
            for v in [p.t_from, p.rho, p.mu, p.sigma] {
                hasher.update(v.to_le_bytes());
            }
        }
        hasher.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks that `grid` ends at the horizon, starts inside it and carries
    /// every breakpoint that falls inside the grid.
    pub fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        let tol = GRID_TOL * self.horizon.max(1.0);
        if grid.t0 < -tol || (grid.t_end - self.horizon).abs() > tol {
            return Err(ModelError::GridOutsideHorizon {
                grid_t0: grid.t0,
                grid_t_end: grid.t_end,
                horizon: self.horizon,
            });
        }
        for b in self.breakpoints() {
            if b > grid.t0 + tol && grid.index_of(b).is_none() {
                return Err(ModelError::BreakpointOffGrid(b));
            }
        }
        Ok(())
    }

    /// Coefficients sampled step by step on an aligned grid.
    pub fn on_grid(&self, grid: &TimeGrid) -> Result<GridCoefficients> {
        self.check_grid(grid)?;
        let n = grid.n_steps;
        let mut step_piece = Vec::with_capacity(n);
        let tol = GRID_TOL * self.horizon.max(1.0);
        let mut j = self
            .pieces
            .partition_point(|p| p.t_from <= grid.t0 + tol)
            .saturating_sub(1);
        for k in 0..n {
            while j + 1 < self.pieces.len() {
                match grid.index_of(self.pieces[j + 1].t_from) {
                    Some(kb) if kb <= k => j += 1,
                    _ => break,
                }
            }
            step_piece.push(j);
        }
        Ok(GridCoefficients {
            grid: *grid,
            pieces: self.pieces.clone(),
            step_piece,
        })
    }
}

/// Uniform grid `t0 + k h`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 || !(t_end > t0) || !t0.is_finite() || !t_end.is_finite() {
            return Err(ModelError::InvalidGrid { t0, t_end, n_steps });
        }
        Ok(Self { t0, t_end, n_steps })
    }

    /// Grid on `[0, horizon]`.
    pub fn over(horizon: f64, n_steps: usize) -> Result<Self> {
        Self::new(0.0, horizon, n_steps)
    }

    /// Grid on `[0, horizon]` with step `h`; `horizon / h` must be an integer.
    pub fn with_step(horizon: f64, h: f64) -> Result<Self> {
        let n = horizon / h;
        let rounded = n.round();
        if !(h > 0.0) || rounded < 1.0 || (n - rounded).abs() > 1e-6 {
            return Err(ModelError::Precondition(format!(
                "horizon {horizon} is not an integer multiple of step {h}"
            )));
        }
        Self::new(0.0, horizon, rounded as usize)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_points(&self) -> usize {
        self.n_steps + 1
    }

    pub fn h(&self) -> f64 {
        (self.t_end - self.t0) / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.t_end
        } else {
            self.t0 + k as f64 * self.h()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.time(k)).collect()
    }

    /// Index of the grid point at `t`, if `t` is one.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let pos = (t - self.t0) / self.h();
        let k = pos.round();
        let tol = GRID_TOL * (self.t_end - self.t0).abs().max(1.0) / self.h();
        if k < 0.0 || k > self.n_steps as f64 || (pos - k).abs() > tol {
            None
        } else {
            Some(k as usize)
        }
    }

    /// The sub-grid starting at point `k`.
    pub fn tail(&self, k: usize) -> Result<Self> {
        if k >= self.n_steps {
            return Err(ModelError::Precondition(format!(
                "tail index {k} leaves no step on a grid with {} steps",
                self.n_steps
            )));
        }
        Ok(Self {
            t0: self.time(k),
            t_end: self.t_end,
            n_steps: self.n_steps - k,
        })
    }

    pub fn same_as(&self, other: &TimeGrid) -> bool {
        self.n_steps == other.n_steps
            && (self.t0 - other.t0).abs() <= GRID_TOL * self.t_end.abs().max(1.0)
            && (self.t_end - other.t_end).abs() <= GRID_TOL * self.t_end.abs().max(1.0)
    }
}

/// Piece lookup table for an aligned grid. Step `k` covers `[t_k, t_{k+1})`.
#[derive(Debug, Clone)]
pub struct GridCoefficients {
    grid: TimeGrid,
    pieces: Vec<Piece>,
    step_piece: Vec<usize>,
}

impl GridCoefficients {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Coefficients in force on step `k`.
    pub fn step(&self, k: usize) -> &Piece {
        &self.pieces[self.step_piece[k]]
    }

    /// Right-continuous coefficients at grid point `k`.
    pub fn at_point(&self, k: usize) -> &Piece {
        self.step(k.min(self.grid.n_steps - 1))
    }

    /// Left-limit coefficients at grid point `k` (equal to `at_point` at `k = 0`).
    pub fn before_point(&self, k: usize) -> &Piece {
        self.step(k.saturating_sub(1))
    }

    /// True when coefficients change at grid point `k`.
    pub fn is_breakpoint(&self, k: usize) -> bool {
        k > 0 && k < self.grid.n_steps && self.step_piece[k] != self.step_piece[k - 1]
    }

    /// `exp(-int rho ds)` over each step, exact for piecewise-constant `rho`.
    pub fn resilience_decays(&self) -> Vec<f64> {
        let h = self.grid.h();
        let per_piece: Vec<f64> = self.pieces.iter().map(|p| (-p.rho * h).exp()).collect();
        self.step_piece.iter().map(|&j| per_piece[j]).collect()
    }
}

/// One realization of the Brownian driver and the impact process.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketPath {
    pub grid: TimeGrid,
    /// Brownian increments per step.
    pub w: Vec<f64>,
    pub gamma: Vec<f64>,
    pub alpha: Vec<f64>,
    pub path_id: u64,
    pub master_seed: u64,
}

impl MarketPath {
    /// Brownian path `W_{t_k} - W_{t_0}`.
    pub fn brownian(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.w.len() + 1);
        let mut acc = 0.0;
        out.push(acc);
        for dw in &self.w {
            acc += dw;
            out.push(acc);
        }
        out
    }

    /// The same realization restricted to the sub-grid starting at point `k`.
    pub fn tail(&self, k: usize) -> Result<Self> {
        Ok(Self {
            grid: self.grid.tail(k)?,
            w: self.w[k..].to_vec(),
            gamma: self.gamma[k..].to_vec(),
            alpha: self.alpha[k..].to_vec(),
            path_id: self.path_id,
            master_seed: self.master_seed,
        })
    }
}

/// Independent random stream for path `path_id`: ChaCha8 keyed by the master
/// seed, with the path index as stream number.
pub fn path_rng(master_seed: u64, path_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(path_id);
    rng
}

/// Precomputed exact lognormal stepping for one model and grid.
#[derive(Debug, Clone)]
pub struct MarketSimulator {
    grid: TimeGrid,
    gamma_start: f64,
    log_drift: Vec<f64>,
    vol: Vec<f64>,
}

impl MarketSimulator {
    /// Simulator whose paths start from `gamma0` at `grid.t0()`.
    pub fn new(model: &CoefficientModel, grid: &TimeGrid) -> Result<Self> {
        let coeffs = model.on_grid(grid)?;
        let h = grid.h();
        let (log_drift, vol) = (0..grid.n_steps)
            .map(|k| {
                let p = coeffs.step(k);
                ((p.mu - 0.5 * p.sigma * p.sigma) * h, p.sigma)
            })
            .unzip();
        Ok(Self {
            grid: *grid,
            gamma_start: model.gamma0(),
            log_drift,
            vol,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn path(&self, master_seed: u64, path_id: u64) -> MarketPath {
        let n = self.grid.n_steps;
        let sqrt_h = self.grid.h().sqrt();
        let mut rng = path_rng(master_seed, path_id);
        let mut w = Vec::with_capacity(n);
        let mut gamma = Vec::with_capacity(n + 1);
        let mut g = self.gamma_start;
        gamma.push(g);
        for k in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            let dw = z * sqrt_h;
            g *= (self.log_drift[k] + self.vol[k] * dw).exp();
            w.push(dw);
            gamma.push(g);
        }
        let alpha = gamma.iter().map(|g| 1.0 / g).collect();
        MarketPath {
            grid: self.grid,
            w,
            gamma,
            alpha,
            path_id,
            master_seed,
        }
    }
}

pub fn simulate_path(
    model: &CoefficientModel,
    grid: &TimeGrid,
    master_seed: u64,
    path_id: u64,
) -> Result<MarketPath> {
    Ok(MarketSimulator::new(model, grid)?.path(master_seed, path_id))
}

/// `n_paths` independent paths; path `i` depends only on `(master_seed, i)`.
pub fn simulate_market(
    model: &CoefficientModel,
    grid: &TimeGrid,
    n_paths: usize,
    master_seed: u64,
) -> Result<Vec<MarketPath>> {
    if n_paths == 0 {
        return Err(ModelError::Precondition("n_paths must be at least 1".into()));
    }
    let sim = MarketSimulator::new(model, grid)?;
    Ok(mc::map_paths(n_paths, |i| sim.path(master_seed, i as u64)))
}

/// Doléans-Dade exponential `exp(Q - Q_0 - [Q]/2)` sampled on the grid,
/// from per-step increments of `Q` and of its bracket. Starts at 1.
pub fn stochastic_exponential(q_increments: &[f64], q_quadratic: &[f64]) -> Vec<f64> {
    assert_eq!(
        q_increments.len(),
        q_quadratic.len(),
        "increment and bracket series must share the grid"
    );
    let mut out = Vec::with_capacity(q_increments.len() + 1);
    let mut log = 0.0;
    out.push(1.0);
    for (dq, dqq) in q_increments.iter().zip(q_quadratic) {
        log += dq - 0.5 * dqq;
        out.push(log.exp());
    }
    out
}
