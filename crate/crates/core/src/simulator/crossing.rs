use serde::{Deserialize, Serialize};

use super::{integrate_with, DiagnosticsConfig, SolverOptions, Trajectory};
use crate::model::{sobolev_norm, ModelParams, ShellState};

/// Bisection levels of re-integration used to locate a crossing.
const REFINE_LEVELS: usize = 3;
/// Sub-samples per bracket in each refinement level.
const REFINE_SUBDIVISIONS: f64 = 64.0;

/// First time the `H^s` norm of a run meets the threshold `θ`. A finite
/// truncation cannot blow up, so a large threshold crossing stands in for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupSurrogate {
    pub s: f64,
    pub threshold: f64,
    pub crossing_time: Option<f64>,
    pub attained_max: f64,
}

impl BlowupSurrogate {
    /// Surrogate on `H^{5/6}`.
    pub fn new(threshold: f64) -> Self {
        Self::with_exponent(5.0 / 6.0, threshold)
    }

    pub fn with_exponent(s: f64, threshold: f64) -> Self {
        BlowupSurrogate {
            s,
            threshold,
            crossing_time: None,
            attained_max: 0.0,
        }
    }
}

fn interpolate(ta: f64, tb: f64, na: f64, nb: f64, theta: f64) -> f64 {
    if nb <= na {
        return tb;
    }
    (ta + (theta - na) / (nb - na) * (tb - ta)).clamp(ta, tb)
}

struct Bracket<'a> {
    params: &'a ModelParams,
    options: &'a SolverOptions,
    s: f64,
    theta: f64,
}

impl Bracket<'_> {
    /// Crossing time inside `[ta, tb]` given the state at `ta`, plus the
    /// largest norm seen by the re-integration.
    fn refine(
        &self,
        state: &ShellState,
        ta: f64,
        tb: f64,
        na: f64,
        nb: f64,
        level: usize,
    ) -> (f64, f64) {
        if level == 0 || tb - ta <= 0.0 {
            return (interpolate(ta, tb, na, nb, self.theta), nb);
        }
        let width = tb - ta;
        let opts = SolverOptions {
            record_every: width / REFINE_SUBDIVISIONS,
            initial_step: self.options.initial_step.min(width / REFINE_SUBDIVISIONS),
            ..self.options.clone()
        };
        let quiet = DiagnosticsConfig {
            sobolev_exponents: Vec::new(),
            ..DiagnosticsConfig::default()
        };
        let Ok(sub) = integrate_with(self.params, state, ta, tb, &opts, &quiet) else {
            return (interpolate(ta, tb, na, nb, self.theta), nb);
        };
        let norms = sub.sobolev_series(self.s);
        let seen = norms.iter().copied().fold(nb, f64::max);
        match norms.iter().position(|&n| n >= self.theta) {
            Some(m) if m > 0 => {
                let (t, inner) = self.refine(
                    &sub.samples[m - 1].state,
                    sub.samples[m - 1].t,
                    sub.samples[m].t,
                    norms[m - 1],
                    norms[m],
                    level - 1,
                );
                (t, seen.max(inner))
            }
            _ => (interpolate(ta, tb, na, nb, self.theta), seen),
        }
    }
}

/// Locates the first sample at which the configured norm reaches the
/// threshold, then refines inside the bracketing sample interval by
/// re-integrating it at a finer cadence (a few levels deep) and finally
/// interpolating linearly in the norm. No crossing is a valid result.
pub fn detect_crossing(traj: &Trajectory, surrogate: &BlowupSurrogate) -> BlowupSurrogate {
    let mut out = surrogate.clone();
    out.crossing_time = None;
    let norms: Vec<f64> = traj
        .samples
        .iter()
        .map(|x| sobolev_norm(&x.state, surrogate.s))
        .collect();
    out.attained_max = norms.iter().copied().fold(0.0, f64::max);
    let Some(k) = norms.iter().position(|&n| n >= surrogate.threshold) else {
        return out;
    };
    if k == 0 {
        out.crossing_time = Some(traj.samples[0].t);
        return out;
    }
    let bracket = Bracket {
        params: &traj.params,
        options: &traj.options,
        s: surrogate.s,
        theta: surrogate.threshold,
    };
    let (t, seen) = bracket.refine(
        &traj.samples[k - 1].state,
        traj.samples[k - 1].t,
        traj.samples[k].t,
        norms[k - 1],
        norms[k],
        REFINE_LEVELS,
    );
    out.crossing_time = Some(t);
    out.attained_max = out.attained_max.max(seen);
    out
}
