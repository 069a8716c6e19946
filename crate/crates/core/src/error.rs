use thiserror::Error;

use crate::model::ShellState;
use crate::simulator::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("state has {got} entries, model expects {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("shell index {index} outside {min}..={max}")]
    ShellOutOfRange {
        index: usize,
        min: usize,
        max: usize,
    },

    #[error("fixed point infeasible: {0}")]
    Infeasible(String),

    #[error("continued fraction pole at j = {j} (mu = {mu})")]
    Pole { j: usize, mu: f64 },

    #[error("continued fraction did not converge at mu = {mu} (depth {depth})")]
    NoConvergence { mu: f64, depth: usize },

    #[error("mu = {mu} is not a root of X (|X(mu)| = {value:e})")]
    NotARoot { mu: f64, value: f64 },

    #[error("in bracket [{lo}, {hi}]: {source}")]
    Bracket {
        lo: f64,
        hi: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite state produced after t = {t}")]
    NonFinite {
        t: f64,
        last_good: ShellState,
        partial: Box<Trajectory>,
    },

    #[error("nonpositive shell energy at j = {j}")]
    NonPositiveEnergy { j: usize },

    #[error("window [{t1}, {t2}] outside trajectory span [{start}, {end}]")]
    WindowOutsideTrajectory {
        t1: f64,
        t2: f64,
        start: f64,
        end: f64,
    },

    #[error("run with N = {n}: {source}")]
    Run {
        n: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
