//! Optimal execution in a limit order book with stochastic price impact and
//! resilience.
//!
//! The crate simulates impact paths, evaluates execution costs of grid
//! strategies, solves for the value factor `Y` and builds the optimal plan.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bsde;
pub mod coefficients;
pub mod cost;
pub mod deviation;
pub mod error;
pub mod export;
pub mod lambert;
pub mod mc;
pub mod strategy;

pub use error::{ModelError, Result};
