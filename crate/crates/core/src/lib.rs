//! Solver for one-sided stochastic impulse control ("optimal harvesting") of
//! one-dimensional diffusions on (0, ∞).
//!
//! The pipeline runs diffusion → fundamental solutions → resolvent tables →
//! free boundaries → value function, with a Monte Carlo simulator of β-γ
//! strategies to cross-check the analytic payoff formulas.

// `!(x > 0.0)` is used deliberately so NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffusion;
pub mod error;
pub mod numeric;
pub mod free_boundary;
pub mod montecarlo;
pub mod payoff;
pub mod problem;
pub mod resolvent;
pub mod value;

pub use error::{Error, Result};
