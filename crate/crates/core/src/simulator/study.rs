use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    detect_crossing, integrate_with, BlowupSurrogate, DiagnosticsConfig, RunStats, SolverOptions,
    Trajectory,
};
use crate::equilibrium::{fixed_point_general, ForcingSpec};
use crate::error::{Error, Result};
use crate::model::{energy, sobolev_norm, ModelParams, ShellState};

/// How initial data is built for each truncation level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum InitialRule {
    Zero,
    /// Fixed point of the model's forcing.
    FixedPoint,
    /// `a_j = amplitude · ratio^j`.
    Geometric {
        amplitude: f64,
        ratio: f64,
    },
    /// Uniform nonnegative entries rescaled to the given energy. The same seed
    /// gives the same leading entries for every N.
    Random {
        seed: u64,
        energy: f64,
    },
}

impl InitialRule {
    pub fn build(&self, params: &ModelParams) -> Result<ShellState> {
        let dim = params.dim();
        Ok(match *self {
            InitialRule::Zero => ShellState::zeros(dim),
            InitialRule::FixedPoint => {
                fixed_point_general(&ForcingSpec::from_params(params), params)?.state
            }
            InitialRule::Geometric { amplitude, ratio } => {
                if !(amplitude.is_finite() && ratio.is_finite()) {
                    return Err(Error::Config(
                        "geometric initial data must be finite".into(),
                    ));
                }
                ShellState::new((0..dim).map(|j| amplitude * ratio.powi(j as i32)).collect())
            }
            InitialRule::Random {
                seed,
                energy: target,
            } => {
                if !(target.is_finite() && target > 0.0) {
                    return Err(Error::Config(format!(
                        "random initial energy must be > 0, got {target}"
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let raw = ShellState::new((0..dim).map(|_| rng.gen::<f64>()).collect());
                let scale = (target / energy(&raw)).sqrt();
                ShellState::new(raw.into_vec().into_iter().map(|a| a * scale).collect())
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum ThresholdRule {
    Absolute(f64),
    /// Multiple of the initial norm of each run.
    RelativeToInitial(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub n_list: Vec<usize>,
    pub initial: InitialRule,
    pub t_end: f64,
    pub options: SolverOptions,
    /// Sobolev exponent of the surrogate.
    pub s: f64,
    pub threshold: ThresholdRule,
    /// End of the window on which runs are compared; defaults to the earliest
    /// crossing (or the earliest end of any run).
    pub window_end: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub n: usize,
    pub threshold: f64,
    pub initial_norm: f64,
    pub crossing: BlowupSurrogate,
    /// Max l² distance on the common shells to the previous row's run.
    pub divergence: Option<f64>,
    pub truncated: bool,
    pub stats: RunStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GalerkinStudy {
    pub rows: Vec<StudyRow>,
    pub window_end: f64,
    pub common_shells: usize,
    #[serde(skip)]
    pub trajectories: Vec<Trajectory>,
}

fn divergence(a: &Trajectory, b: &Trajectory, shells: usize, window_end: f64) -> f64 {
    let tol = 1e-9 * a.options.record_every;
    let (mut i, mut k) = (0, 0);
    let mut worst = 0.0f64;
    while i < a.samples.len() && k < b.samples.len() {
        let (ta, tb) = (a.samples[i].t, b.samples[k].t);
        if ta > window_end + tol || tb > window_end + tol {
            break;
        }
        if (ta - tb).abs() <= tol {
            let d: f64 = (0..shells)
                .map(|j| {
                    let e = a.samples[i].state[j] - b.samples[k].state[j];
                    e * e
                })
                .sum();
            worst = worst.max(d.sqrt());
            i += 1;
            k += 1;
        } else if ta < tb {
            i += 1;
        } else {
            k += 1;
        }
    }
    worst
}

/// Runs the same problem at each truncation in `n_list` (in parallel), detects
/// the surrogate crossing of each run, and measures how far consecutive runs
/// drift apart on their common shells.
pub fn galerkin_study(params_base: &ModelParams, cfg: &StudyConfig) -> Result<GalerkinStudy> {
    if cfg.n_list.is_empty() {
        return Err(Error::Config("n_list is empty".into()));
    }
    if cfg.n_list.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config(format!(
            "n_list must be ascending, got {:?}",
            cfg.n_list
        )));
    }
    let results: Vec<(Trajectory, StudyRow)> = cfg
        .n_list
        .par_iter()
        .map(|&n| {
            let run = || -> Result<(Trajectory, StudyRow)> {
                let params = params_base.with_shells(n)?;
                let initial = cfg.initial.build(&params)?;
                let initial_norm = sobolev_norm(&initial, cfg.s);
                let threshold = match cfg.threshold {
                    ThresholdRule::Absolute(v) => v,
                    ThresholdRule::RelativeToInitial(f) => f * initial_norm,
                };
                let traj = integrate_with(
                    &params,
                    &initial,
                    0.0,
                    cfg.t_end,
                    &cfg.options,
                    &DiagnosticsConfig::default(),
                )?;
                let crossing =
                    detect_crossing(&traj, &BlowupSurrogate::with_exponent(cfg.s, threshold));
                let row = StudyRow {
                    n,
                    threshold,
                    initial_norm,
                    crossing,
                    divergence: None,
                    truncated: traj.is_truncated(),
                    stats: traj.stats.clone(),
                };
                Ok((traj, row))
            };
            run().map_err(|e| Error::Run {
                n,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let window_end = cfg.window_end.unwrap_or_else(|| {
        results
            .iter()
            .map(|(traj, row)| row.crossing.crossing_time.unwrap_or(traj.end_time()))
            .fold(cfg.t_end, f64::min)
    });
    let common_shells = cfg.n_list[0] + 1;
    let (trajectories, mut rows): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    for i in 1..rows.len() {
        rows[i].divergence = Some(divergence(
            &trajectories[i - 1],
            &trajectories[i],
            common_shells,
            window_end,
        ));
    }
    Ok(GalerkinStudy {
        rows,
        window_end,
        common_shells,
        trajectories,
    })
}
