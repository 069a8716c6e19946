//! Forced inviscid dyadic shell model: state and dynamics, fixed points,
//! linear spectrum, stiff time integration and trajectory analysis.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod equilibrium;
pub mod error;
pub mod io;
pub mod model;
pub mod simulator;
pub mod spectral;

pub use error::{Error, Result};
pub use model::{Closure, Derivative, ModelParams, ShellState, DEFAULT_LAMBDA};
