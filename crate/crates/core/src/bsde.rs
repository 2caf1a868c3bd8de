//! Solvers for the value factor `Y` of the quadratic BSDE
//!
//! ```text
//! dY = -f(Y, Z) d[M] + Z dM,  Y_T = 1/2,
//! f(y, z) = -((rho + mu) y + sigma z)^2 / (sigma^2 y + (2 rho + mu - sigma^2) / 2) + mu y + sigma z
//! ```
//!
//! With deterministic coefficients `Z = 0`, so `Y` solves the backward ODE
//! `Y' = -f(Y, 0)`. Closed forms are provided for the regimes that have one,
//! plus an RK4 integrator and the discrete-time recursion.

use serde::{Deserialize, Serialize};

use crate::coefficients::{CoefficientModel, GridCoefficients, Piece, TimeGrid};
use crate::error::{ModelError, Result};
use crate::lambert::lambert_w0_of_exp;

/// Overshoot outside `[0, 1/2]` that is attributed to rounding and clamped.
const CLAMP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolutionSource {
    Ow,
    LambertW,
    PiecewiseJump,
    NegativeResilience,
    Bernoulli,
    OdeIntegrated,
    Constant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueSolution {
    pub grid: TimeGrid,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    /// Feedback ratio at each grid point, right-continuous in time.
    pub beta_tilde: Vec<f64>,
    /// Left limit of the feedback ratio at each grid point. Differs from
    /// `beta_tilde` only where a coefficient jumps.
    pub beta_left: Vec<f64>,
    pub source: SolutionSource,
}

impl ValueSolution {
    pub fn y0(&self) -> f64 {
        self.y[0]
    }

    /// Restriction to the sub-grid starting at point `k`.
    pub fn tail(&self, k: usize) -> Result<Self> {
        let grid = self.grid.tail(k)?;
        let mut beta_left = self.beta_left[k..].to_vec();
        // At the new start there is no history.
        beta_left[0] = self.beta_tilde[k];
        Ok(Self {
            grid,
            y: self.y[k..].to_vec(),
            z: self.z[k..].to_vec(),
            beta_tilde: self.beta_tilde[k..].to_vec(),
            beta_left,
            source: self.source,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteValue {
    pub grid: TimeGrid,
    pub h: f64,
    pub y_h: Vec<f64>,
}

impl DiscreteValue {
    pub fn y0(&self) -> f64 {
        self.y_h[0]
    }
}

fn denominator(p: &Piece, y: f64) -> f64 {
    p.sigma * p.sigma * y + 0.5 * p.positivity()
}

fn checked_denominator(p: &Piece, t: f64, y: f64) -> Result<f64> {
    let value = denominator(p, y);
    if !(value > 0.0) {
        return Err(ModelError::DegenerateDenominator { t, value });
    }
    Ok(value)
}

fn driver_piece(p: &Piece, t: f64, y: f64, z: f64) -> Result<f64> {
    let den = checked_denominator(p, t, y)?;
    let num = (p.rho + p.mu) * y + p.sigma * z;
    Ok(-num * num / den + p.mu * y + p.sigma * z)
}

fn beta_piece(p: &Piece, t: f64, y: f64, z: f64) -> Result<f64> {
    let den = checked_denominator(p, t, y)?;
    Ok(((p.rho + p.mu) * y + p.sigma * z) / den)
}

/// BSDE driver with the coefficients in force at `t`.
pub fn driver(model: &CoefficientModel, t: f64, y: f64, z: f64) -> Result<f64> {
    driver_piece(model.piece_at(t), t, y, z)
}

/// Feedback ratio `((rho + mu) y + sigma z) / (sigma^2 y + (2 rho + mu - sigma^2) / 2)`.
pub fn beta_tilde_at(model: &CoefficientModel, t: f64, y: f64, z: f64) -> Result<f64> {
    beta_piece(model.piece_at(t), t, y, z)
}

fn clamp_y(t: f64, y: f64) -> Result<f64> {
    if (0.0..=0.5).contains(&y) {
        Ok(y)
    } else if y > 0.5 && y - 0.5 <= CLAMP_TOL {
        Ok(0.5)
    } else if (-CLAMP_TOL..0.0).contains(&y) {
        Ok(0.0)
    } else {
        Err(ModelError::BoundViolation { t, value: y })
    }
}

fn assemble(
    coeffs: &GridCoefficients,
    mut y: Vec<f64>,
    source: SolutionSource,
) -> Result<ValueSolution> {
    let grid = *coeffs.grid();
    let n = grid.n_steps();
    y[n] = 0.5;
    for (k, v) in y.iter_mut().enumerate() {
        *v = clamp_y(grid.time(k), *v)?;
    }
    let mut beta_tilde = Vec::with_capacity(n + 1);
    let mut beta_left = Vec::with_capacity(n + 1);
    for (k, &yk) in y.iter().enumerate() {
        let t = grid.time(k);
        beta_tilde.push(beta_piece(coeffs.at_point(k), t, yk, 0.0)?);
        beta_left.push(beta_piece(coeffs.before_point(k), t, yk, 0.0)?);
    }
    Ok(ValueSolution {
        grid,
        z: vec![0.0; n + 1],
        y,
        beta_tilde,
        beta_left,
        source,
    })
}

fn single_piece(model: &CoefficientModel, regime: &str) -> Result<Piece> {
    let first = model.pieces()[0];
    let constant = model
        .pieces()
        .iter()
        .all(|p| p.rho == first.rho && p.mu == first.mu && p.sigma == first.sigma);
    if !constant {
        return Err(ModelError::Precondition(format!(
            "{regime} solution needs constant coefficients"
        )));
    }
    Ok(first)
}

/// `Y_s = 1 / (2 + (T - s) rho)` for constant `rho > 0` and `mu = sigma = 0`.
pub fn solve_y_ow(model: &CoefficientModel, grid: &TimeGrid) -> Result<ValueSolution> {
    let p = single_piece(model, "Obizhaeva-Wang")?;
    if p.mu != 0.0 || p.sigma != 0.0 {
        return Err(ModelError::Precondition(
            "Obizhaeva-Wang solution needs mu = sigma = 0".into(),
        ));
    }
    if !(p.rho > 0.0) {
        return Err(ModelError::Precondition(format!(
            "Obizhaeva-Wang solution needs rho > 0, got {}",
            p.rho
        )));
    }
    let coeffs = model.on_grid(grid)?;
    let big_t = model.horizon();
    let y = grid
        .times()
        .iter()
        .map(|s| 1.0 / (2.0 + (big_t - s) * p.rho))
        .collect();
    assemble(&coeffs, y, SolutionSource::Ow)
}

/// Closed form through the Lambert W function for constant `rho`, `sigma > 0`
/// and `mu = 0`.
pub fn solve_y_lambert(model: &CoefficientModel, grid: &TimeGrid) -> Result<ValueSolution> {
    let p = single_piece(model, "Lambert W")?;
    if p.mu != 0.0 || !(p.sigma > 0.0) {
        return Err(ModelError::Precondition(
            "Lambert W solution needs mu = 0 and sigma > 0".into(),
        ));
    }
    let coeffs = model.on_grid(grid)?;
    let (rho, s2) = (p.rho, p.sigma * p.sigma);
    let c = (rho - 0.5 * s2) / s2;
    let kappa = std::f64::consts::LN_2 + (2.0 * rho - s2 + rho * rho * model.horizon()) / s2;
    let log_c = c.ln();
    let y = grid
        .times()
        .iter()
        .map(|&s| Ok(c / lambert_w0_of_exp(log_c + kappa - rho * rho / s2 * s)?))
        .collect::<Result<Vec<f64>>>()?;
    assemble(&coeffs, y, SolutionSource::LambertW)
}

/// `(1 - exp(-a h)) / a`, continuous at `a = 0`.
fn decay_integral(a: f64, h: f64) -> f64 {
    if a == 0.0 {
        h
    } else {
        -(-a * h).exp_m1() / a
    }
}

/// Bernoulli-equation closed form for `sigma = 0` and piecewise-constant
/// `rho`, `mu`:
///
/// ```text
/// Y_s = e^{int_s^T mu} / ( int_s^T 2 (rho + mu)^2 / (2 rho + mu) e^{int_r^T mu} dr + 2 )
/// ```
///
/// Both integrals are evaluated exactly piece by piece.
pub fn solve_y_deterministic(model: &CoefficientModel, grid: &TimeGrid) -> Result<ValueSolution> {
    if !model.sigma_vanishes() {
        return Err(ModelError::Precondition(
            "Bernoulli solution needs sigma = 0; use the Lambert W or ODE solver".into(),
        ));
    }
    let coeffs = model.on_grid(grid)?;
    let n = grid.n_steps();
    let h = grid.h();
    // Normalised by e^{-int_s^T mu}: y = 1 / (j + 2 e), kept bounded backwards.
    let mut j = 0.0;
    let mut e = 1.0;
    let mut y = vec![0.0; n + 1];
    y[n] = 0.5;
    for k in (0..n).rev() {
        let p = coeffs.step(k);
        let g = 2.0 * (p.rho + p.mu) * (p.rho + p.mu) / (2.0 * p.rho + p.mu);
        let damp = (-p.mu * h).exp();
        j = damp * j + g * decay_integral(p.mu, h);
        e *= damp;
        y[k] = 1.0 / (j + 2.0 * e);
    }
    assemble(&coeffs, y, SolutionSource::Bernoulli)
}

/// Closed form for `mu = 0` on `[0, t0)` and `mu = 1` on `[t0, T]`, with
/// constant `rho` and `sigma = 0`.
pub fn solve_y_jump(model: &CoefficientModel, grid: &TimeGrid) -> Result<ValueSolution> {
    let (rho, t0) = jump_parameters(model)?;
    let coeffs = model.on_grid(grid)?;
    let big_t = model.horizon();
    let late = |s: f64| {
        (2.0 * rho + 1.0)
            / (2.0 * (rho + 1.0) * (rho + 1.0) - 2.0 * rho * rho * (s - big_t).exp())
    };
    let y_t0 = late(t0);
    // Grid points from the switch on use the late branch; the switch index is
    // exact because breakpoints sit on the grid.
    let k0 = grid.index_of(t0).unwrap_or(0);
    let y = grid
        .times()
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            if k >= k0 {
                late(s)
            } else {
                1.0 / (1.0 / y_t0 + (t0 - s) * rho)
            }
        })
        .collect();
    assemble(&coeffs, y, SolutionSource::PiecewiseJump)
}

/// `(rho, t0)` of a model with `mu` switching from 0 to 1 at `t0`.
pub fn jump_parameters(model: &CoefficientModel) -> Result<(f64, f64)> {
    let bad = || {
        ModelError::Precondition(
            "jump solution needs sigma = 0, constant rho and mu stepping from 0 to 1".into(),
        )
    };
    let pieces = model.pieces();
    if pieces.len() != 2 || !model.sigma_vanishes() {
        return Err(bad());
    }
    let (a, b) = (pieces[0], pieces[1]);
    if a.rho != b.rho || a.mu != 0.0 || b.mu != 1.0 {
        return Err(bad());
    }
    Ok((a.rho, b.t_from))
}

/// Closed form for constant `rho`, `mu != 0`, `sigma = 0`; covers negative
/// resilience `rho < 0`:
///
/// ```text
/// Y_s = mu (2 rho + mu) / 2 / ((rho + mu)^2 - rho^2 e^{mu (s - T)})
/// ```
pub fn solve_y_negres(model: &CoefficientModel, grid: &TimeGrid) -> Result<ValueSolution> {
    let p = single_piece(model, "negative-resilience")?;
    if p.sigma != 0.0 || p.mu == 0.0 {
        return Err(ModelError::Precondition(
            "negative-resilience solution needs sigma = 0 and mu != 0".into(),
        ));
    }
    let coeffs = model.on_grid(grid)?;
    let (rho, mu, big_t) = (p.rho, p.mu, model.horizon());
    let y = grid
        .times()
        .iter()
        .map(|&s| {
            0.5 * mu * (2.0 * rho + mu)
                / ((rho + mu) * (rho + mu) - rho * rho * (mu * (s - big_t)).exp())
        })
        .collect();
    assemble(&coeffs, y, SolutionSource::NegativeResilience)
}

/// `Y = 1/2` when `rho = 0`; the feedback ratio is then exactly 1.
pub fn solve_y_constant(model: &CoefficientModel, grid: &TimeGrid) -> Result<ValueSolution> {
    if !model.rho_vanishes() {
        return Err(ModelError::Precondition(
            "constant solution needs rho = 0".into(),
        ));
    }
    let coeffs = model.on_grid(grid)?;
    let n = grid.n_steps();
    Ok(ValueSolution {
        grid: *coeffs.grid(),
        y: vec![0.5; n + 1],
        z: vec![0.0; n + 1],
        beta_tilde: vec![1.0; n + 1],
        beta_left: vec![1.0; n + 1],
        source: SolutionSource::Constant,
    })
}

/// Classical RK4 integration of `Y' = -f(Y, 0)` backwards from `Y_T = 1/2`,
/// one step per grid interval with the coefficients of that interval.
pub fn solve_y_ode(model: &CoefficientModel, grid: &TimeGrid) -> Result<ValueSolution> {
    let coeffs = model.on_grid(grid)?;
    let floor = model.conditions().epsilon / 4.0;
    let n = grid.n_steps();
    let h = grid.h();
    let mut y = vec![0.0; n + 1];
    y[n] = 0.5;
    for k in (0..n).rev() {
        let p = coeffs.step(k);
        let t = grid.time(k + 1);
        let rhs = |v: f64| -> Result<f64> {
            let den = denominator(p, v);
            if den < floor {
                return Err(ModelError::DegenerateDenominator { t, value: den });
            }
            let a = (p.rho + p.mu) * v;
            Ok(a * a / den - p.mu * v)
        };
        // Integrate in reversed time tau = T - s, where dY/dtau = -Y'.
        let y1 = y[k + 1];
        let k1 = -rhs(y1)?;
        let k2 = -rhs(y1 + 0.5 * h * k1)?;
        let k3 = -rhs(y1 + 0.5 * h * k2)?;
        let k4 = -rhs(y1 + h * k3)?;
        let next = y1 + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        y[k] = clamp_y(grid.time(k), next)?;
    }
    assemble(&coeffs, y, SolutionSource::OdeIntegrated)
}

/// Picks the closed form that applies to `model`, falling back to RK4.
pub fn solve_y(model: &CoefficientModel, grid: &TimeGrid) -> Result<ValueSolution> {
    if model.rho_vanishes() {
        return solve_y_constant(model, grid);
    }
    if model.pieces().len() == 1 {
        let p = model.pieces()[0];
        if p.sigma == 0.0 && p.mu == 0.0 && p.rho > 0.0 {
            return solve_y_ow(model, grid);
        }
        if p.sigma > 0.0 && p.mu == 0.0 {
            return solve_y_lambert(model, grid);
        }
        if p.sigma == 0.0 {
            return solve_y_negres(model, grid);
        }
    }
    if jump_parameters(model).is_ok() {
        return solve_y_jump(model, grid);
    }
    if model.sigma_vanishes() {
        return solve_y_deterministic(model, grid);
    }
    solve_y_ode(model, grid)
}

/// Largest central-difference discrepancy between `Y'` and `-f(Y, 0)` at
/// interior grid points. Points where a coefficient jumps are skipped.
pub fn ode_residual(solution: &ValueSolution, model: &CoefficientModel) -> Result<f64> {
    let coeffs = model.on_grid(&solution.grid)?;
    let grid = &solution.grid;
    let h = grid.h();
    let mut worst = 0.0f64;
    for k in 1..grid.n_steps() {
        if coeffs.is_breakpoint(k) {
            continue;
        }
        let slope = (solution.y[k + 1] - solution.y[k - 1]) / (2.0 * h);
        let f = driver_piece(coeffs.at_point(k), grid.time(k), solution.y[k], solution.z[k])?;
        worst = worst.max((slope + f).abs());
    }
    Ok(worst)
}

/// Backward recursion of the discrete-time problem on the grid of step `h`.
/// The conditional expectations of the impact ratio are the exact lognormal
/// moments.
pub fn discrete_value_recursion(model: &CoefficientModel, h: f64) -> Result<DiscreteValue> {
    let grid = TimeGrid::with_step(model.horizon(), h)?;
    let coeffs = model.on_grid(&grid)?;
    let n = grid.n_steps();
    let h = grid.h();
    let mut y_h = vec![0.0; n + 1];
    y_h[n] = 0.5;
    for k in (0..n).rev() {
        let p = coeffs.step(k);
        let b = (-p.rho * h).exp();
        let mean_ratio = (p.mu * h).exp();
        let mean_inverse = ((p.sigma * p.sigma - p.mu) * h).exp();
        let next = y_h[k + 1];
        let num = next * (b - mean_ratio);
        let den = next * (b * b * mean_inverse - 2.0 * b + mean_ratio)
            + 0.5 * (1.0 - b * b * mean_inverse);
        if !(den > 0.0) {
            return Err(ModelError::DegenerateDenominator {
                t: grid.time(k),
                value: den,
            });
        }
        let v = mean_ratio * next - num * num / den;
        debug_assert!(v > 0.0 && v <= 0.5 + CLAMP_TOL, "discrete value left (0, 1/2]: {v}");
        y_h[k] = v.min(0.5);
    }
    Ok(DiscreteValue { grid, h, y_h })
}
