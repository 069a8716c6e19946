//! Post-processing of states and trajectories: inertial-range spectrum fits,
//! Kolmogorov constants of the fixed point, the l² decay estimate towards the
//! fixed point, the blow-up time bound and energy-balance audits.
//!
//! Spectra use the convention `E(2^j) = a_j^2`: the shell energy is the
//! spectral density sampled at the left edge of the octave. With it the fixed
//! point has `E(k) = λ^{1/3} f_0 k^{-(2/3) log2 λ}`, i.e. `2^{5/6} f_0 k^{-5/3}`
//! at λ = 2^{5/2}.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{distance, sobolev_norm, Closure, ShellState};
use crate::simulator::Trajectory;

/// Relative tolerance on window endpoints and sample times.
const TIME_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub j: usize,
    pub log2_shell_energy: f64,
    pub fitted: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Per-octave slope of `log2 a_j^2`; -5/3 for a Kolmogorov spectrum.
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    pub j_range: (usize, usize),
    pub points: Vec<FitPoint>,
}

/// Least-squares fit of `log2(E_j)` against `j` over `lo..=hi`, where `E_j`
/// are shell energies `a_j^2` (instantaneous or time-averaged).
pub fn spectrum_fit(shell_energies: &[f64], lo: usize, hi: usize) -> Result<FitResult> {
    if lo >= hi {
        return Err(Error::Config(format!(
            "fit range {lo}:{hi} must contain at least two shells"
        )));
    }
    if hi >= shell_energies.len() {
        return Err(Error::ShellOutOfRange {
            index: hi,
            min: 0,
            max: shell_energies.len().saturating_sub(1),
        });
    }
    if let Some(j) = (lo..=hi).find(|&j| !(shell_energies[j] > 0.0)) {
        return Err(Error::NonPositiveEnergy { j });
    }
    let xs: Vec<f64> = (lo..=hi).map(|j| j as f64).collect();
    let ys: Vec<f64> = (lo..=hi).map(|j| shell_energies[j].log2()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let points: Vec<FitPoint> = (lo..=hi)
        .zip(&ys)
        .map(|(j, &y)| {
            let fitted = intercept + slope * j as f64;
            FitPoint {
                j,
                log2_shell_energy: y,
                fitted,
                residual: y - fitted,
            }
        })
        .collect();
    let residual_rms = (points.iter().map(|p| p.residual * p.residual).sum::<f64>() / n).sqrt();
    Ok(FitResult {
        slope,
        intercept,
        residual_rms,
        j_range: (lo, hi),
        points,
    })
}

/// [`spectrum_fit`] on the shell energies of one state.
pub fn spectrum_fit_state(state: &ShellState, lo: usize, hi: usize) -> Result<FitResult> {
    spectrum_fit(&state.shell_energies(), lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KolmogorovConstants {
    /// Dissipation rate `ε = a_0 f_0 = λ^{1/6} f_0^{3/2}`.
    pub epsilon: f64,
    /// `c_0 = λ^{2/9}` in `E(k) = c_0 ε^{2/3} k^{-5/3}`.
    pub c0: f64,
    /// `E(1) = a_0^2 = λ^{1/3} f_0`.
    pub prefactor: f64,
}

/// Constants of the fixed point under single-mode forcing `f_0`.
pub fn kolmogorov_constants(f0: f64, lambda: f64) -> Result<KolmogorovConstants> {
    if !(f0.is_finite() && f0 > 0.0) {
        return Err(Error::Config(format!("f0 must be positive, got {f0}")));
    }
    if !(lambda.is_finite() && lambda > 1.0) {
        return Err(Error::Config(format!("lambda must be > 1, got {lambda}")));
    }
    let epsilon = lambda.powf(1.0 / 6.0) * f0.powf(1.5);
    let prefactor = lambda.powf(1.0 / 3.0) * f0;
    let c0 = lambda.powf(2.0 / 9.0);
    let check = c0 * epsilon.powf(2.0 / 3.0);
    if (check - prefactor).abs() > 1e-12 * prefactor {
        return Err(Error::Config(format!(
            "inconsistent constants: c0 eps^(2/3) = {check}, prefactor = {prefactor}"
        )));
    }
    Ok(KolmogorovConstants {
        epsilon,
        c0,
        prefactor,
    })
}

/// `2 λ^{1/3} ‖b(0)‖`: upper bound on the blow-up time of a regular solution
/// starting at distance `‖b(0)‖` from the fixed point.
pub fn blowup_bound(b0_l2: f64, lambda: f64) -> f64 {
    2.0 * lambda.powf(1.0 / 3.0) * b0_l2
}

/// `½ λ^{-1/3}`: guaranteed decay rate of `‖b‖` along regular solutions.
pub fn decay_rate(lambda: f64) -> f64 {
    0.5 * lambda.powf(-1.0 / 3.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayWindow {
    /// Requested window.
    pub t1: f64,
    pub t2: f64,
    /// First and last regular samples inside the window.
    pub t_first: f64,
    pub t_last: f64,
    pub measured_decrement: f64,
    pub bound_decrement: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub windows: Vec<DecayWindow>,
    /// Requested windows with fewer than two regular samples, or with `b` at
    /// rounding level.
    pub excluded: Vec<(f64, f64)>,
    /// `None` when every window was excluded.
    pub pass_fraction: Option<f64>,
    pub slack: f64,
    pub regularity_threshold: f64,
}

/// Consecutive windows of the given width covering `[start, end]`; a final
/// partial window is dropped.
pub fn tile_windows(start: f64, end: f64, width: f64) -> Vec<(f64, f64)> {
    if !(width > 0.0) || !(end > start) {
        return Vec::new();
    }
    let count = ((end - start) / width * (1.0 + TIME_TOL)).floor() as usize;
    (0..count)
        .map(|k| (start + k as f64 * width, start + (k + 1) as f64 * width))
        .collect()
}

/// Checks `‖b(T_1)‖ - ‖b(T_2)‖ >= ½ λ^{-1/3}(T_2 - T_1)·(1 - slack)` for
/// `b = a - fixed_point` on each window.
///
/// Only the regular part of the run is used: samples before the first one
/// whose `H^{5/6}` norm reaches `regularity_threshold`. Each window is clipped
/// to its first and last regular samples; windows with fewer than two, or on
/// which `b` is at rounding level at the first sample, are excluded. A window
/// in which `b` reaches zero passes once the whole of `‖b(T_1)‖` is gone.
pub fn decay_check(
    traj: &Trajectory,
    fixed_point: &ShellState,
    windows: &[(f64, f64)],
    regularity_threshold: f64,
    slack: f64,
) -> Result<DecayReport> {
    if !(0.0..1.0).contains(&slack) {
        return Err(Error::Config(format!(
            "slack must be in [0, 1), got {slack}"
        )));
    }
    if traj.samples.is_empty() {
        return Err(Error::Config("trajectory has no samples".into()));
    }
    let (start, end) = (traj.start_time(), traj.end_time());
    let span_tol = TIME_TOL * (end - start).abs().max(1.0);
    for &(t1, t2) in windows {
        if !(t1 < t2) {
            return Err(Error::Config(format!("window [{t1}, {t2}] is empty")));
        }
        if t1 < start - span_tol || t2 > end + span_tol {
            return Err(Error::WindowOutsideTrajectory { t1, t2, start, end });
        }
    }
    let regular_len = traj
        .samples
        .iter()
        .position(|s| sobolev_norm(&s.state, 5.0 / 6.0) >= regularity_threshold)
        .unwrap_or(traj.samples.len());
    let regular = &traj.samples[..regular_len];
    let b_norm: Vec<f64> = regular
        .iter()
        .map(|s| distance(&s.state, fixed_point))
        .collect::<Result<_>>()?;
    let rate = decay_rate(traj.params.lambda());
    // Distances below this are rounding noise around the fixed point.
    let floor = 1e3
        * f64::EPSILON
        * crate::model::energy(fixed_point)
            .sqrt()
            .max(f64::MIN_POSITIVE);

    let mut report = DecayReport {
        windows: Vec::new(),
        excluded: Vec::new(),
        pass_fraction: None,
        slack,
        regularity_threshold,
    };
    for &(t1, t2) in windows {
        let inside: Vec<usize> = (0..regular.len())
            .filter(|&k| regular[k].t >= t1 - span_tol && regular[k].t <= t2 + span_tol)
            .collect();
        let (Some(&first), Some(&last)) = (inside.first(), inside.last()) else {
            report.excluded.push((t1, t2));
            continue;
        };
        if first == last || b_norm[first] <= floor {
            report.excluded.push((t1, t2));
            continue;
        }
        let measured = b_norm[first] - b_norm[last];
        let bound = rate * (regular[last].t - regular[first].t);
        report.windows.push(DecayWindow {
            t1,
            t2,
            t_first: regular[first].t,
            t_last: regular[last].t,
            measured_decrement: measured,
            bound_decrement: bound,
            // ‖b‖ cannot drop below zero, so the bound caps at ‖b(T_1)‖.
            pass: measured >= bound.min(b_norm[first]) * (1.0 - slack),
        });
    }
    if !report.windows.is_empty() {
        let passed = report.windows.iter().filter(|w| w.pass).count();
        report.pass_fraction = Some(passed as f64 / report.windows.len() as f64);
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceAudit {
    /// Max over sample pairs `(i, k)` of `|E_k - E_i - ∫_{t_i}^{t_k} Σ f_j a_j dt|`.
    pub max_defect: f64,
    /// Cumulative defect at the last sample.
    pub final_defect: f64,
    pub elapsed: f64,
}

/// Audits `dE/dt = Σ f_j a_j` along the recorded samples, integrating the
/// forcing work with the trapezoidal rule. Under the tail closure the outflow
/// `λ^{N-1/3} a_N^3` through the top shell is included.
pub fn energy_balance_audit(traj: &Trajectory, forcing: &[f64]) -> BalanceAudit {
    let params = &traj.params;
    let n = params.n_shells();
    let outflow_coef = match params.closure() {
        Closure::Galerkin => 0.0,
        Closure::Tail => params.lambda().powf(n as f64 - 1.0 / 3.0),
    };
    let work = |s: &ShellState| -> f64 {
        let a = s.as_slice();
        forcing.iter().zip(a).map(|(f, a)| f * a).sum::<f64>() - outflow_coef * a[n].powi(3)
    };
    let mut cumulative = 0.0;
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    let mut defect = 0.0;
    if let Some(first) = traj.samples.first() {
        let e0 = crate::model::energy(&first.state);
        let mut prev_work = work(&first.state);
        for pair in traj.samples.windows(2) {
            let w = work(&pair[1].state);
            cumulative += 0.5 * (pair[1].t - pair[0].t) * (w + prev_work);
            prev_work = w;
            defect = crate::model::energy(&pair[1].state) - e0 - cumulative;
            lo = lo.min(defect);
            hi = hi.max(defect);
        }
    }
    BalanceAudit {
        max_defect: hi - lo,
        final_defect: defect,
        elapsed: traj.end_time() - traj.start_time(),
    }
}

/// Trapezoidal time average of `f(state)` over the samples in `[t1, t2]`.
pub fn time_average<F>(traj: &Trajectory, t1: f64, t2: f64, f: F) -> Result<Vec<f64>>
where
    F: Fn(&ShellState) -> Vec<f64>,
{
    let (start, end) = (traj.start_time(), traj.end_time());
    let tol = TIME_TOL * (end - start).abs().max(1.0);
    if traj.samples.is_empty() || !(t1 < t2) || t1 < start - tol || t2 > end + tol {
        return Err(Error::WindowOutsideTrajectory { t1, t2, start, end });
    }
    let inside: Vec<_> = traj
        .samples
        .iter()
        .filter(|s| s.t >= t1 - tol && s.t <= t2 + tol)
        .collect();
    if inside.len() < 2 {
        return Err(Error::Config(format!(
            "fewer than two samples in [{t1}, {t2}]"
        )));
    }
    let values: Vec<Vec<f64>> = inside.iter().map(|s| f(&s.state)).collect();
    let mut acc = vec![0.0; values[0].len()];
    for k in 1..inside.len() {
        let dt = inside[k].t - inside[k - 1].t;
        for (a, (x, y)) in acc.iter_mut().zip(values[k].iter().zip(&values[k - 1])) {
            *a += 0.5 * dt * (x + y);
        }
    }
    let span = inside.last().unwrap().t - inside[0].t;
    Ok(acc.into_iter().map(|a| a / span).collect())
}

/// Time-averaged shell energies `<a_j^2>` over `[t1, t2]`.
pub fn time_averaged_shell_energies(traj: &Trajectory, t1: f64, t2: f64) -> Result<Vec<f64>> {
    time_average(traj, t1, t2, |s| s.shell_energies())
}

/// Time-averaged fluxes `<Π_J>` over `[t1, t2]` for the given shells.
pub fn time_averaged_fluxes(
    traj: &Trajectory,
    t1: f64,
    t2: f64,
    shells: &[usize],
) -> Result<Vec<f64>> {
    let n = traj.params.n_shells();
    if let Some(&j) = shells.iter().find(|&&j| j < 1 || j > n) {
        return Err(Error::ShellOutOfRange {
            index: j,
            min: 1,
            max: n,
        });
    }
    let params = &traj.params;
    time_average(traj, t1, t2, |s| {
        shells
            .iter()
            .map(|&j| crate::model::energy_flux(params, s, j).unwrap_or(f64::NAN))
            .collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundComparison {
    pub b0_l2: f64,
    pub bound: f64,
    pub crossing_time: Option<f64>,
    /// `None` without a crossing.
    pub within_bound: Option<bool>,
}

pub fn compare_with_bound(b0_l2: f64, lambda: f64, crossing_time: Option<f64>) -> BoundComparison {
    let bound = blowup_bound(b0_l2, lambda);
    BoundComparison {
        b0_l2,
        bound,
        crossing_time,
        within_bound: crossing_time.map(|t| t <= bound),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelParams, DEFAULT_LAMBDA};
    use crate::simulator::{DiagnosticsConfig, RunStats, Sample, SolverOptions};
    use proptest::prelude::*;

    const LAM: f64 = DEFAULT_LAMBDA;

    fn synthetic(params: ModelParams, states: Vec<(f64, Vec<f64>)>) -> Trajectory {
        Trajectory {
            params,
            options: SolverOptions::default(),
            diagnostics_config: DiagnosticsConfig::default(),
            diagnostics: Vec::new(),
            samples: states
                .into_iter()
                .map(|(t, a)| Sample {
                    t,
                    state: ShellState::new(a),
                })
                .collect(),
            events: Vec::new(),
            stats: RunStats::default(),
        }
    }

    #[test]
    fn fit_exact_power_law() {
        let e: Vec<f64> = (0..10).map(|j| 2f64.powi(-2 * j)).collect();
        let fit = spectrum_fit(&e, 0, 9).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-14);
        assert!(fit.intercept.abs() < 1e-13);
        assert!(fit.residual_rms < 1e-13);
        assert_eq!(fit.points.len(), 10);
    }

    #[test]
    fn fit_two_points_has_no_residual() {
        let fit = spectrum_fit(&[3.0, 0.7, 11.0], 1, 2).unwrap();
        assert!(fit.residual_rms < 1e-15);
    }

    #[test]
    fn fit_fixed_point() {
        for f0 in [1.0, 0.3, 7.0] {
            let state = ShellState::new(
                (0..=20)
                    .map(|j| LAM.powf(-(j as f64) / 3.0 + 1.0 / 6.0) * f64::sqrt(f0))
                    .collect(),
            );
            let fit = spectrum_fit_state(&state, 3, 16).unwrap();
            assert!((fit.slope + 5.0 / 3.0).abs() < 1e-10);
            assert!((fit.intercept - 5.0 / 6.0 - f0.log2()).abs() < 1e-10);
            assert!(fit.residual_rms < 1e-12);
        }
    }

    #[test]
    fn fit_errors() {
        let e = [1.0, 0.5, 0.0, 0.25];
        assert!(matches!(
            spectrum_fit(&e, 0, 3),
            Err(Error::NonPositiveEnergy { j: 2 })
        ));
        assert!(matches!(
            spectrum_fit(&e, 2, 9),
            Err(Error::ShellOutOfRange { index: 9, .. })
        ));
        assert!(spectrum_fit(&e, 1, 1).is_err());
        assert!(spectrum_fit(&e, 3, 1).is_err());
    }

    #[test]
    fn kolmogorov_values() {
        let k = kolmogorov_constants(1.0, LAM).unwrap();
        assert!((k.epsilon - 2f64.powf(5.0 / 12.0)).abs() < 1e-14);
        assert!((k.epsilon - 1.33484).abs() < 1e-5);
        assert!((k.c0 - 2f64.powf(5.0 / 9.0)).abs() < 1e-14);
        assert!((k.c0 - 1.46973).abs() < 1e-5);
        assert!((k.prefactor - 2f64.powf(5.0 / 6.0)).abs() < 1e-14);
        assert!(kolmogorov_constants(0.0, LAM).is_err());
        assert!(kolmogorov_constants(-1.0, LAM).is_err());
    }

    #[test]
    fn bound_values() {
        assert_eq!(blowup_bound(0.0, LAM), 0.0);
        assert!((blowup_bound(1.0, LAM) - 2f64.powf(11.0 / 6.0)).abs() < 1e-14);
        assert!((blowup_bound(1.0, LAM) - 3.5636).abs() < 1e-4);
        let c = compare_with_bound(1.0, LAM, Some(1.0));
        assert_eq!(c.within_bound, Some(true));
        assert_eq!(compare_with_bound(1.0, LAM, None).within_bound, None);
    }

    #[test]
    fn tiling() {
        assert_eq!(tile_windows(0.0, 1.0, 0.5), vec![(0.0, 0.5), (0.5, 1.0)]);
        assert_eq!(tile_windows(0.0, 1.2, 0.5).len(), 2);
        assert!(tile_windows(0.0, 0.3, 0.5).is_empty());
        assert!(tile_windows(0.0, 1.0, 0.0).is_empty());
    }

    fn decaying(rate: f64) -> (Trajectory, ShellState) {
        let params = ModelParams::single_mode(LAM, 3, LAM.powf(-1.0 / 3.0)).unwrap();
        let fp = ShellState::new((0..4).map(|j| LAM.powf(-(j as f64) / 3.0)).collect());
        let dir = [0.6, 0.0, 0.8, 0.0];
        let states = (0..=40)
            .map(|k| {
                let t = 0.05 * k as f64;
                let b = 3.0 - rate * t;
                (
                    t,
                    fp.as_slice()
                        .iter()
                        .zip(dir)
                        .map(|(a, d)| a + b * d)
                        .collect(),
                )
            })
            .collect();
        (synthetic(params, states), fp)
    }

    #[test]
    fn decay_boundary_case_passes_with_zero_margin() {
        let (traj, fp) = decaying(decay_rate(LAM));
        let report = decay_check(&traj, &fp, &tile_windows(0.0, 2.0, 0.5), 1e9, 0.0).unwrap();
        assert_eq!(report.windows.len(), 4);
        for w in &report.windows {
            assert!((w.measured_decrement - w.bound_decrement).abs() < 1e-12);
        }
        // exact equality is up to rounding, so judge with a hair of slack
        let report = decay_check(&traj, &fp, &tile_windows(0.0, 2.0, 0.5), 1e9, 1e-9).unwrap();
        assert_eq!(report.pass_fraction, Some(1.0));
    }

    #[test]
    fn decay_fast_and_slow() {
        let windows = tile_windows(0.0, 2.0, 0.5);
        let (traj, fp) = decaying(2.0 * decay_rate(LAM));
        let r = decay_check(&traj, &fp, &windows, 1e9, 0.1).unwrap();
        assert_eq!(r.pass_fraction, Some(1.0));
        let (traj, fp) = decaying(0.5 * decay_rate(LAM));
        let r = decay_check(&traj, &fp, &windows, 1e9, 0.1).unwrap();
        assert_eq!(r.pass_fraction, Some(0.0));
    }

    #[test]
    fn decay_on_fixed_point_is_empty() {
        let (mut traj, fp) = decaying(0.0);
        for s in &mut traj.samples {
            s.state = fp.clone();
        }
        let r = decay_check(&traj, &fp, &tile_windows(0.0, 2.0, 0.5), 1e9, 0.1).unwrap();
        assert!(r.windows.is_empty());
        assert_eq!(r.excluded.len(), 4);
        assert_eq!(r.pass_fraction, None);
    }

    #[test]
    fn decay_rounding_noise_is_excluded() {
        let (mut traj, fp) = decaying(0.0);
        for s in &mut traj.samples {
            s.state = ShellState::new(fp.as_slice().iter().map(|a| a * (1.0 + 1e-15)).collect());
        }
        let r = decay_check(&traj, &fp, &tile_windows(0.0, 2.0, 0.5), 1e9, 0.1).unwrap();
        assert_eq!(r.pass_fraction, None);
    }

    #[test]
    fn decay_reaching_zero_passes() {
        // ‖b‖ = 0.1 hits zero at t = 0.05 and stays there; the full bound over
        // [0, 0.5] would ask for more than ‖b(0)‖
        let (mut traj, fp) = decaying(0.0);
        for s in &mut traj.samples {
            let b = (0.1 - 2.0 * s.t).max(0.0);
            s.state = ShellState::new(
                fp.as_slice()
                    .iter()
                    .zip([0.6, 0.0, 0.8, 0.0])
                    .map(|(a, d)| a + b * d)
                    .collect(),
            );
        }
        assert!(decay_rate(LAM) * 0.5 > 0.1);
        let r = decay_check(&traj, &fp, &[(0.0, 0.5)], 1e9, 0.1).unwrap();
        assert_eq!(r.pass_fraction, Some(1.0));
        assert!(r.windows[0].measured_decrement < r.windows[0].bound_decrement);
    }

    #[test]
    fn decay_window_errors_and_clipping() {
        let (traj, fp) = decaying(decay_rate(LAM));
        assert!(matches!(
            decay_check(&traj, &fp, &[(1.5, 2.5)], 1e9, 0.1),
            Err(Error::WindowOutsideTrajectory { .. })
        ));
        assert!(decay_check(&traj, &fp, &[(1.0, 1.0)], 1e9, 0.1).is_err());
        // threshold between the norms of late and early samples clips windows
        let norms = traj.sobolev_series(5.0 / 6.0);
        let theta = 0.5 * (norms[10] + norms[11]);
        assert!(norms[0] > norms[40]);
        let r = decay_check(&traj, &fp, &tile_windows(0.0, 2.0, 0.5), theta, 0.1).unwrap();
        assert!(r.windows.len() + r.excluded.len() == 4);
    }

    #[test]
    fn balance_audit_unforced_is_energy_change() {
        let params = ModelParams::new(LAM, 2, vec![]).unwrap();
        let traj = synthetic(
            params,
            vec![
                (0.0, vec![1.0, 0.0, 0.0]),
                (1.0, vec![0.0, 0.5, 0.0]),
                (2.0, vec![1.0, 1.0, 0.0]),
            ],
        );
        let a = energy_balance_audit(&traj, &[]);
        // E = 0.5, 0.125, 1.0
        assert!((a.max_defect - 0.875).abs() < 1e-15);
        assert!((a.final_defect - 0.5).abs() < 1e-15);
        assert_eq!(a.elapsed, 2.0);
    }

    #[test]
    fn balance_audit_on_stationary_forced_state() {
        let params = ModelParams::single_mode(LAM, 4, 1.0).unwrap();
        let fp: Vec<f64> = (0..5)
            .map(|j| LAM.powf(-(j as f64) / 3.0 + 1.0 / 6.0))
            .collect();
        let traj = synthetic(
            params,
            (0..=10).map(|k| (0.1 * k as f64, fp.clone())).collect(),
        );
        let a = energy_balance_audit(&traj, &[1.0]);
        let eps = kolmogorov_constants(1.0, LAM).unwrap().epsilon;
        assert!((a.max_defect - eps).abs() < 1e-12);
    }

    #[test]
    fn averages() {
        let params = ModelParams::new(LAM, 1, vec![]).unwrap();
        let traj = synthetic(
            params,
            vec![
                (0.0, vec![1.0, 0.0]),
                (1.0, vec![0.0, 1.0]),
                (2.0, vec![1.0, 1.0]),
            ],
        );
        let avg = time_averaged_shell_energies(&traj, 0.0, 2.0).unwrap();
        assert!((avg[0] - 0.5).abs() < 1e-15 && (avg[1] - 0.75).abs() < 1e-15);
        assert!(time_averaged_shell_energies(&traj, -1.0, 1.0).is_err());
        let flux = time_averaged_fluxes(&traj, 0.0, 1.0, &[1]).unwrap();
        assert_eq!(flux, vec![0.0]);
        assert!(time_averaged_fluxes(&traj, 0.0, 1.0, &[2]).is_err());
    }

    proptest! {
        #[test]
        fn fit_scale_invariance(
            e in proptest::collection::vec(1e-6f64..1e3, 3..25),
            c in 1e-3f64..1e3,
        ) {
            let hi = e.len() - 1;
            let base = spectrum_fit(&e, 0, hi).unwrap();
            let scaled: Vec<f64> = e.iter().map(|x| x * c).collect();
            let fit = spectrum_fit(&scaled, 0, hi).unwrap();
            prop_assert!((fit.slope - base.slope).abs() < 1e-9);
            prop_assert!((fit.intercept - base.intercept - c.log2()).abs() < 1e-9);
            prop_assert!(fit.residual_rms >= 0.0);
        }

        #[test]
        fn fit_exact_on_power_laws(slope in -5.0f64..5.0, icpt in -10.0f64..10.0, lo in 0usize..10, len in 2usize..20) {
            let e: Vec<f64> = (0..lo + len).map(|j| (icpt + slope * j as f64).exp2()).collect();
            let fit = spectrum_fit(&e, lo, lo + len - 1).unwrap();
            prop_assert!((fit.slope - slope).abs() < 1e-9);
            prop_assert!(fit.residual_rms < 1e-9);
        }

        #[test]
        fn kolmogorov_identity(f0 in 1e-6f64..1e6, lambda in 1.5f64..64.0) {
            let k = kolmogorov_constants(f0, lambda).unwrap();
            prop_assert!((k.c0 * k.epsilon.powf(2.0 / 3.0) - k.prefactor).abs() <= 1e-12 * k.prefactor);
        }

        #[test]
        fn kolmogorov_identity_default_lambda(f0 in 1e-6f64..1e6) {
            let k = kolmogorov_constants(f0, LAM).unwrap();
            prop_assert!((k.c0 * k.epsilon.powf(2.0 / 3.0) - 2f64.powf(5.0 / 6.0) * f0).abs() <= 1e-12 * k.prefactor);
        }

        #[test]
        fn bound_linear_and_increasing(b in 0.0f64..100.0, c in 0.0f64..10.0, l1 in 1.1f64..50.0, dl in 0.01f64..10.0) {
            let lhs = blowup_bound(b * c, l1);
            prop_assert!((lhs - c * blowup_bound(b, l1)).abs() <= 1e-12 * lhs.abs().max(1.0));
            if b > 0.0 {
                prop_assert!(blowup_bound(b, l1 + dl) > blowup_bound(b, l1));
            }
        }

        #[test]
        fn decay_faster_passes_slower_fails(factor in 1.05f64..5.0) {
            let windows = tile_windows(0.0, 2.0, 0.5);
            let (traj, fp) = decaying(factor * decay_rate(LAM));
            prop_assert_eq!(decay_check(&traj, &fp, &windows, 1e9, 0.0).unwrap().pass_fraction, Some(1.0));
            let (traj, fp) = decaying(decay_rate(LAM) / factor);
            prop_assert_eq!(decay_check(&traj, &fp, &windows, 1e9, 0.0).unwrap().pass_fraction, Some(0.0));
        }
    }
}
