use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("horizon must be positive, got {0}")]
    NonPositiveHorizon(f64),
    #[error("initial impact gamma0 must be positive, got {0}")]
    NonPositiveImpact(f64),
    #[error("coefficient pieces must start at t=0 and be strictly increasing inside [0, T)")]
    InvalidPieces,
    #[error("coefficient value is not finite on piece starting at t={t_from}")]
    NonFiniteCoefficient { t_from: f64 },
    #[error("condition 2*rho + mu - sigma^2 > 0 violated on piece starting at t={t_from} (value {value})")]
    PositivityViolated { t_from: f64, value: f64 },
    #[error("grid must have at least one step and t0 < T, got t0={t0}, T={t_end}, n_steps={n_steps}")]
    InvalidGrid { t0: f64, t_end: f64, n_steps: usize },
    #[error("grid [{grid_t0}, {grid_t_end}] does not fit the model horizon [0, {horizon}]")]
    GridOutsideHorizon { grid_t0: f64, grid_t_end: f64, horizon: f64 },
    #[error("coefficient breakpoint t={0} is not a grid point")]
    BreakpointOffGrid(f64),
    #[error("time {0} is not a grid point")]
    TimeOffGrid(f64),
    #[error("grids do not match")]
    GridMismatch,
    #[error("{0}")]
    Precondition(String),
    #[error("Lambert W argument {0} is below the branch point -1/e")]
    LambertDomain(f64),
    #[error("driver denominator {value} degenerated at t={t}")]
    DegenerateDenominator { t: f64, value: f64 },
    #[error("value factor {value} left [0, 1/2] at t={t}")]
    BoundViolation { t: f64, value: f64 },
    #[error("closed form is singular at nu={nu}: {reason}")]
    SingularParameter { nu: f64, reason: &'static str },
}

pub type Result<T> = std::result::Result<T, ModelError>;
