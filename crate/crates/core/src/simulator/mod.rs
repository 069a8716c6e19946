//! Adaptive time integration of the truncated system with diagnostics,
//! surrogate blow-up detection and convergence-in-N studies.
//!
//! The system is stiff: near the fixed point the Jacobian has eigenvalues of
//! size `λ^{2N/3}`, and far larger transients occur once energy reaches the
//! top shells. The default scheme is therefore an implicit embedded SDIRK
//! pair; an exponential integrating-factor scheme is offered as an
//! independent second method.

mod crossing;
mod etd;
mod sdirk;
mod study;
mod tridiag;

use serde::{Deserialize, Serialize};

pub use crossing::{detect_crossing, BlowupSurrogate};
pub use study::{galerkin_study, GalerkinStudy, InitialRule, StudyConfig, StudyRow, ThresholdRule};

use crate::error::{Error, Result};
use crate::model::{
    box_energy, distance, energy, energy_flux, sobolev_norm, ModelParams, ShellState,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    #[default]
    #[serde(rename = "adaptive-embedded-pair")]
    EmbeddedPair,
    #[serde(rename = "integrating-factor")]
    IntegratingFactor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub initial_step: f64,
    /// Steps shorter than this (or than a few ulps of `t`) end the run with a
    /// [`EventKind::StepUnderflow`] event.
    pub min_step: f64,
    pub max_steps: u64,
    pub positivity_guard: bool,
    pub scheme: Scheme,
    /// Output cadence in simulated time.
    pub record_every: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: 0.1,
            initial_step: 1e-4,
            min_step: 1e-20,
            max_steps: 20_000_000,
            positivity_guard: true,
            scheme: Scheme::EmbeddedPair,
            record_every: 0.01,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("max_step", self.max_step),
            ("initial_step", self.initial_step),
            ("min_step", self.min_step),
            ("record_every", self.record_every),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be a positive number, got {v}"
                )));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Which diagnostics are recorded alongside each sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    pub sobolev_exponents: Vec<f64>,
    /// Shells `J` (1..=N) at which the flux `Π_J` is recorded.
    pub flux_shells: Vec<usize>,
    /// Shells `J` (0..=N) at which the box energy `E_{B_J}` is recorded.
    pub box_shells: Vec<usize>,
    pub fixed_point_reference: Option<ShellState>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            sobolev_exponents: vec![0.0, 5.0 / 6.0, 1.0],
            flux_shells: Vec::new(),
            box_shells: Vec::new(),
            fixed_point_reference: None,
        }
    }
}

impl DiagnosticsConfig {
    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        let n = params.n_shells();
        if let Some(&s) = self.sobolev_exponents.iter().find(|s| !s.is_finite()) {
            return Err(Error::Config(format!("sobolev exponent {s} is not finite")));
        }
        if let Some(&j) = self.flux_shells.iter().find(|&&j| j < 1 || j > n) {
            return Err(Error::ShellOutOfRange {
                index: j,
                min: 1,
                max: n,
            });
        }
        if let Some(&j) = self.box_shells.iter().find(|&&j| j > n) {
            return Err(Error::ShellOutOfRange {
                index: j,
                min: 0,
                max: n,
            });
        }
        if let Some(fp) = &self.fixed_point_reference {
            params.check_len(fp)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub state: ShellState,
}

/// Diagnostics of one sample, ordered as in the [`DiagnosticsConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub energy: f64,
    pub sobolev: Vec<f64>,
    pub box_energies: Vec<f64>,
    pub fluxes: Vec<f64>,
    pub dist_fp: Option<f64>,
}

impl Diagnostics {
    pub fn compute(
        params: &ModelParams,
        state: &ShellState,
        cfg: &DiagnosticsConfig,
    ) -> Result<Self> {
        Ok(Diagnostics {
            energy: energy(state),
            sobolev: cfg
                .sobolev_exponents
                .iter()
                .map(|&s| sobolev_norm(state, s))
                .collect(),
            box_energies: cfg
                .box_shells
                .iter()
                .map(|&j| box_energy(state, j))
                .collect::<Result<_>>()?,
            fluxes: cfg
                .flux_shells
                .iter()
                .map(|&j| energy_flux(params, state, j))
                .collect::<Result<_>>()?,
            dist_fp: cfg
                .fixed_point_reference
                .as_ref()
                .map(|fp| distance(state, fp))
                .transpose()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    /// Step size fell below `min_step`; the run stops early.
    StepUnderflow,
    /// `max_steps` step attempts were used up.
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub t: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub accepted_steps: u64,
    pub rejected_steps: u64,
    pub newton_failures: u64,
    pub positivity_rejections: u64,
    pub clamped_components: u64,
    pub rhs_evaluations: u64,
    pub smallest_step: f64,
    pub largest_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: ModelParams,
    pub options: SolverOptions,
    pub diagnostics_config: DiagnosticsConfig,
    pub samples: Vec<Sample>,
    /// One entry per sample.
    pub diagnostics: Vec<Diagnostics>,
    pub events: Vec<Event>,
    pub stats: RunStats,
}

impl Trajectory {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.t)
    }

    pub fn start_time(&self) -> f64 {
        self.samples.first().map_or(0.0, |s| s.t)
    }

    pub fn end_time(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    pub fn first_state(&self) -> Option<&ShellState> {
        self.samples.first().map(|s| &s.state)
    }

    pub fn last_state(&self) -> Option<&ShellState> {
        self.samples.last().map(|s| &s.state)
    }

    /// True when the run stopped before its requested end time.
    pub fn is_truncated(&self) -> bool {
        !self.events.is_empty()
    }

    /// `H^s` norm of every sample, recomputed from the states.
    pub fn sobolev_series(&self, s: f64) -> Vec<f64> {
        self.samples
            .iter()
            .map(|x| sobolev_norm(&x.state, s))
            .collect()
    }

    fn push(&mut self, t: f64, state: &[f64]) -> Result<()> {
        let state = ShellState::new(state.to_vec());
        let diag = Diagnostics::compute(&self.params, &state, &self.diagnostics_config)?;
        self.samples.push(Sample { t, state });
        self.diagnostics.push(diag);
        Ok(())
    }
}

pub(crate) enum Attempt {
    Done { err: f64 },
    NewtonFailed,
    NonFinite,
}

/// `max_j |v_j| / (abs_tol + rel_tol·max(|y_j|, |z_j|))`.
pub(crate) fn scaled_max(v: &[f64], y: &[f64], z: &[f64], opts: &SolverOptions) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..v.len() {
        let sc = opts.abs_tol + opts.rel_tol * y[j].abs().max(z[j].abs());
        let r = (v[j] / sc).abs();
        if r.is_nan() {
            return f64::NAN;
        }
        worst = worst.max(r);
    }
    worst
}

enum Stepper {
    Sdirk(sdirk::Sdirk),
    Etd(etd::Etd),
}

impl Stepper {
    fn attempt(
        &mut self,
        params: &ModelParams,
        y: &[f64],
        h: f64,
        opts: &SolverOptions,
        out: &mut [f64],
    ) -> Attempt {
        match self {
            Stepper::Sdirk(s) => s.attempt(params, y, h, opts, out),
            Stepper::Etd(s) => s.attempt(params, y, h, opts, out),
        }
    }

    fn error_exponent(&self) -> f64 {
        match self {
            Stepper::Sdirk(_) => sdirk::Sdirk::ERROR_EXPONENT,
            Stepper::Etd(_) => etd::Etd::ERROR_EXPONENT,
        }
    }

    fn rhs_evals(&self) -> u64 {
        match self {
            Stepper::Sdirk(s) => s.rhs_evals,
            Stepper::Etd(s) => s.rhs_evals,
        }
    }
}

/// Integrates from `t = 0` to `t_end`, recording the default diagnostics.
pub fn integrate(
    params: &ModelParams,
    initial: &ShellState,
    t_end: f64,
    opts: &SolverOptions,
) -> Result<Trajectory> {
    integrate_with(
        params,
        initial,
        0.0,
        t_end,
        opts,
        &DiagnosticsConfig::default(),
    )
}

/// Integrates from `t0` to `t_end`.
///
/// Samples are recorded at `t0 + k·record_every` and at `t_end`; the stepper
/// lands exactly on each output time. With the positivity guard on, a step
/// producing a component below `-abs_tol` is rejected and retried with half
/// the step; smaller negative excursions are clamped to zero.
///
/// If the step size underflows the partial trajectory is returned with a
/// [`EventKind::StepUnderflow`] event. If it underflows while every retry
/// produced non-finite values, [`Error::NonFinite`] carries the last good
/// state and the partial trajectory.
pub fn integrate_with(
    params: &ModelParams,
    initial: &ShellState,
    t0: f64,
    t_end: f64,
    opts: &SolverOptions,
    diagnostics: &DiagnosticsConfig,
) -> Result<Trajectory> {
    opts.validate()?;
    params.check_len(initial)?;
    diagnostics.validate(params)?;
    if !(t0.is_finite() && t_end.is_finite() && t_end > t0) {
        return Err(Error::Config(format!(
            "need t_end > t0, got t0 = {t0}, t_end = {t_end}"
        )));
    }
    if !initial.is_finite() {
        return Err(Error::Config("initial state has non-finite entries".into()));
    }
    if opts.positivity_guard && initial.min() < 0.0 {
        return Err(Error::Config(
            "initial state has negative entries while the positivity guard is on".into(),
        ));
    }

    let dim = params.dim();
    let mut traj = Trajectory {
        params: params.clone(),
        options: opts.clone(),
        diagnostics_config: diagnostics.clone(),
        samples: Vec::new(),
        diagnostics: Vec::new(),
        events: Vec::new(),
        stats: RunStats {
            smallest_step: f64::INFINITY,
            ..RunStats::default()
        },
    };
    let mut stepper = match opts.scheme {
        Scheme::EmbeddedPair => Stepper::Sdirk(sdirk::Sdirk::new(dim)),
        Scheme::IntegratingFactor => Stepper::Etd(etd::Etd::new(dim)),
    };
    let expo = stepper.error_exponent();

    let mut y = initial.as_slice().to_vec();
    let mut y_new = vec![0.0; dim];
    let mut t = t0;
    let mut h = opts.initial_step.min(opts.max_step);
    let mut k_out: u64 = 1;
    let output_time = |k: u64| (t0 + k as f64 * opts.record_every).min(t_end);
    let mut target = output_time(k_out);
    let mut attempts: u64 = 0;
    let mut nonfinite_streak = false;
    traj.push(t, &y)?;

    while t < t_end {
        let remaining = target - t;
        if remaining <= 4.0 * f64::EPSILON * target.abs().max(1.0) {
            // output time equal to the current time up to rounding
            t = target;
            if t > traj.end_time() {
                traj.push(t, &y)?;
            }
            k_out += 1;
            target = output_time(k_out);
            continue;
        }
        if attempts >= opts.max_steps {
            traj.events.push(Event {
                kind: EventKind::MaxSteps,
                t,
                detail: format!("{} step attempts", attempts),
            });
            break;
        }
        let hits = h * 1.01 >= remaining;
        let h_try = if hits { remaining } else { h };
        // below a few ulps of t the step no longer advances time meaningfully
        let floor = opts.min_step.max(8.0 * f64::EPSILON * t.abs());
        if h_try < floor {
            if nonfinite_streak {
                if t > traj.end_time() {
                    traj.push(t, &y)?;
                }
                traj.stats.rhs_evaluations = stepper.rhs_evals();
                return Err(Error::NonFinite {
                    t,
                    last_good: ShellState::new(y),
                    partial: Box::new(traj),
                });
            }
            traj.events.push(Event {
                kind: EventKind::StepUnderflow,
                t,
                detail: format!("step {h_try:e} below floor {floor:e}"),
            });
            break;
        }
        attempts += 1;

        let err = match stepper.attempt(params, &y, h_try, opts, &mut y_new) {
            Attempt::Done { err } => err,
            Attempt::NewtonFailed => {
                traj.stats.newton_failures += 1;
                traj.stats.rejected_steps += 1;
                h = 0.5 * h_try;
                continue;
            }
            Attempt::NonFinite => {
                nonfinite_streak = true;
                traj.stats.rejected_steps += 1;
                h = 0.25 * h_try;
                continue;
            }
        };
        nonfinite_streak = false;
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-expo)).clamp(0.2, 5.0)
        };
        if err > 1.0 {
            traj.stats.rejected_steps += 1;
            h = h_try * factor.min(0.9);
            continue;
        }
        if opts.positivity_guard {
            let low = y_new.iter().copied().fold(f64::INFINITY, f64::min);
            if low < -opts.abs_tol {
                traj.stats.positivity_rejections += 1;
                traj.stats.rejected_steps += 1;
                h = 0.5 * h_try;
                continue;
            }
            if low < 0.0 {
                for v in y_new.iter_mut().filter(|v| **v < 0.0) {
                    *v = 0.0;
                    traj.stats.clamped_components += 1;
                }
            }
        }

        t = if hits { target } else { t + h_try };
        std::mem::swap(&mut y, &mut y_new);
        traj.stats.accepted_steps += 1;
        traj.stats.smallest_step = traj.stats.smallest_step.min(h_try);
        traj.stats.largest_step = traj.stats.largest_step.max(h_try);
        h = if hits && factor >= 1.0 {
            h.max(h_try * factor)
        } else {
            h_try * factor
        };
        h = h.min(opts.max_step);

        if hits {
            traj.push(t, &y)?;
            k_out += 1;
            target = output_time(k_out);
        }
    }
    if traj.is_truncated() && t > traj.end_time() {
        traj.push(t, &y)?;
    }
    traj.stats.rhs_evaluations = stepper.rhs_evals();
    if traj.stats.accepted_steps == 0 {
        traj.stats.smallest_step = 0.0;
    }
    Ok(traj)
}
