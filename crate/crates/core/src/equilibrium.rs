//! Fixed points of the forced system.
//!
//! For single-mode forcing the fixed point is `a_j = λ^{-j/3+1/6} √f_0`. For a
//! finitely supported force `(f_0, ..., f_k)` the fixed point is geometric from
//! shell `k` on, `a_j = λ^{-j/3} C`; the constant `C` is found by recovering
//! `a_{k-1}, ..., a_0` from the fixed-point equations and matching `a_0 a_1 = f_0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, ShellState};

/// A finitely supported force `(f_0, ..., f_k, 0, 0, ...)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingSpec {
    values: Vec<f64>,
}

impl ForcingSpec {
    /// Trailing zeros are trimmed, so `support_end` is the last positive entry.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if let Some((j, f)) = values
            .iter()
            .enumerate()
            .find(|(_, f)| !(f.is_finite() && **f >= 0.0))
        {
            return Err(Error::Config(format!(
                "forcing f_{j} = {f} must be finite and >= 0"
            )));
        }
        while values.last() == Some(&0.0) {
            values.pop();
        }
        Ok(ForcingSpec { values })
    }

    pub fn from_params(params: &ModelParams) -> Self {
        // already validated
        Self::new(params.forcing().to_vec()).expect("validated forcing")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.is_empty()
    }

    /// Index `k` of the last positive entry (0 for the zero force).
    pub fn support_end(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    fn get(&self, j: usize) -> f64 {
        self.values.get(j).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub state: ShellState,
    /// `C` in `a_j = λ^{-j/3} C` for `j >= tail_start`.
    pub tail_constant: f64,
    pub tail_start: usize,
}

/// `a_j = λ^{-j/3+1/6} √f_0` on shells `0..=N` of `params`.
pub fn fixed_point_single(f0: f64, params: &ModelParams) -> Result<FixedPoint> {
    if !(f0.is_finite() && f0 > 0.0) {
        return Err(Error::Config(format!("f0 must be positive, got {f0}")));
    }
    let lambda = params.lambda();
    let c = lambda.powf(1.0 / 6.0) * f0.sqrt();
    Ok(FixedPoint {
        state: geometric_tail(lambda, c, 0, params.n_shells()).into(),
        tail_constant: c,
        tail_start: 0,
    })
}

fn geometric_tail(lambda: f64, c: f64, from: usize, to: usize) -> Vec<f64> {
    (from..=to)
        .map(|j| lambda.powf(-(j as f64) / 3.0) * c)
        .collect()
}

/// Recovers `a_0..=a_{k+1}` from the tail constant, or `None` when some
/// `a_{j-1}^2 = λ a_j a_{j+1} - λ^{1-j} f_j` comes out negative.
fn downward_recursion(force: &ForcingSpec, lambda: f64, c: f64) -> Option<Vec<f64>> {
    let k = force.support_end();
    let mut a = vec![0.0; k + 2];
    a[k] = lambda.powf(-(k as f64) / 3.0) * c;
    a[k + 1] = lambda.powf(-(k as f64 + 1.0) / 3.0) * c;
    for j in (1..=k).rev() {
        let sq = lambda * a[j] * a[j + 1] - lambda.powi(1 - j as i32) * force.get(j);
        if sq < 0.0 {
            return None;
        }
        a[j - 1] = sq.sqrt();
    }
    Some(a)
}

/// `a_0 a_1 - f_0` at tail constant `c`; infeasible constants count as too small.
fn consistency(force: &ForcingSpec, lambda: f64, c: f64) -> f64 {
    match downward_recursion(force, lambda, c) {
        Some(a) => a[0] * a[1] - force.get(0),
        None => -1.0,
    }
}

/// Fixed point for a finitely supported force.
///
/// Every `a_j` is nondecreasing in `C` along the recursion, so the consistency
/// residual is monotone and bisection on `C` is safe once a sign change is
/// bracketed. The upper end of the bracket is grown geometrically.
pub fn fixed_point_general(force: &ForcingSpec, params: &ModelParams) -> Result<FixedPoint> {
    let n = params.n_shells();
    if force.is_zero() {
        return Ok(FixedPoint {
            state: ShellState::zeros(n + 1),
            tail_constant: 0.0,
            tail_start: 0,
        });
    }
    let lambda = params.lambda();
    let k = force.support_end();

    let total: f64 = force.values().iter().sum();
    let mut hi = lambda.powf(k as f64 / 3.0 + 1.0 / 6.0) * total.sqrt();
    let mut grown = 0;
    while consistency(force, lambda, hi) <= 0.0 {
        hi *= 2.0;
        grown += 1;
        if grown > 200 || !hi.is_finite() {
            return Err(Error::Infeasible(format!(
                "no sign change of a_0 a_1 - f_0 up to C = {hi:e}"
            )));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if consistency(force, lambda, mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = hi;
    let head = downward_recursion(force, lambda, c)
        .ok_or_else(|| Error::Infeasible(format!("downward recursion negative at C = {c:e}")))?;

    let mut a: Vec<f64> = head[..k].to_vec();
    a.extend(geometric_tail(lambda, c, k, n.max(k)));
    a.truncate(n + 1);
    Ok(FixedPoint {
        state: a.into(),
        tail_constant: c,
        tail_start: k,
    })
}

/// Absolute defect `max_j |da_j/dt|` under the model's closure.
pub fn residual(params: &ModelParams, state: &ShellState) -> Result<f64> {
    Ok(crate::model::rhs(params, state)?.max_abs())
}

/// Defect of each equation relative to the size of its terms,
/// `|da_j/dt| / (λ^{j-1} a_{j-1}^2 + λ^j |a_j a_{j+1}| + f_j)`, maximized over `j`.
pub fn relative_residual(params: &ModelParams, state: &ShellState) -> Result<f64> {
    let d = crate::model::rhs(params, state)?;
    let a = state.as_slice();
    let n = params.n_shells();
    let top = match params.closure() {
        crate::model::Closure::Galerkin => 0.0,
        crate::model::Closure::Tail => params.lambda().powf(-1.0 / 3.0) * a[n],
    };
    let mut worst = 0.0f64;
    for j in 0..=n {
        let next = if j < n { a[j + 1] } else { top };
        let mut scale = params.lambda_pow(j) * (a[j] * next).abs() + params.forcing()[j];
        if j > 0 {
            scale += params.lambda_pow(j - 1) * a[j - 1] * a[j - 1];
        }
        let r = d.0[j].abs();
        if r > 0.0 {
            worst = worst.max(if scale > 0.0 {
                r / scale
            } else {
                f64::INFINITY
            });
        }
    }
    Ok(worst)
}

/// Exponent `e_j` with `A_j = A_0^{e_j}` for the normalized fixed-point recursion,
/// `j >= 3`: odd `j` gives `-3·2^{j-2} + (1+2^{j-2})/3`, even `j` gives `3·2^{j-2} + (1-2^{j-2})/3`.
pub fn orbit_exponent(j: u32) -> i64 {
    match j {
        0 => 1,
        1 => -1,
        2 => 3,
        _ => {
            let p = 1i64 << (j - 2);
            if j % 2 == 1 {
                -3 * p + (1 + p) / 3
            } else {
                3 * p + (1 - p) / 3
            }
        }
    }
}

/// `log A_j` for `j = 0..=steps` of `A_1 = 1/A_0`, `A_2 = A_0^3`, `A_{j+1} = A_0 A_j^{-2}`.
///
/// Any `A_0 != 1` diverges double-exponentially, which is why the normalized
/// fixed point must be `A_j ≡ 1`. Kept in log space: `A_j` overflows near `j = 12`.
pub fn uniqueness_orbit(a0: f64, steps: usize) -> Result<Vec<f64>> {
    if !(a0.is_finite() && a0 > 0.0) {
        return Err(Error::Config(format!("A0 must be positive, got {a0}")));
    }
    if steps < 3 {
        return Err(Error::Config(format!("steps must be >= 3, got {steps}")));
    }
    let l0 = a0.ln();
    let mut logs = vec![l0, -l0, 3.0 * l0];
    for j in 2..steps {
        logs.push(l0 - 2.0 * logs[j]);
    }
    Ok(logs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Closure, DEFAULT_LAMBDA};
    use proptest::prelude::*;

    fn params(n: usize) -> ModelParams {
        ModelParams::new(DEFAULT_LAMBDA, n, vec![]).unwrap()
    }

    #[test]
    fn normalized_forcing_gives_pure_power() {
        let f0 = DEFAULT_LAMBDA.powf(-1.0 / 3.0);
        let fp = fixed_point_single(f0, &params(20)).unwrap();
        for j in 0..=20 {
            let expected = 2f64.powf(-5.0 * j as f64 / 6.0);
            assert!((fp.state[j] - expected).abs() < 1e-15 * expected.max(1e-300) + 1e-17);
        }
    }

    #[test]
    fn unit_forcing_value() {
        let fp = fixed_point_single(1.0, &params(5)).unwrap();
        assert!((fp.state[0] - 2f64.powf(5.0 / 12.0)).abs() < 1e-15);
        assert!((fp.state[0] - 1.33484).abs() < 1e-5);
        assert_eq!(fp.tail_start, 0);
        assert!((fp.tail_constant - DEFAULT_LAMBDA.powf(1.0 / 6.0)).abs() < 1e-15);
        let r = DEFAULT_LAMBDA.powf(-1.0 / 3.0);
        for j in 0..5 {
            assert!((fp.state[j + 1] / fp.state[j] - r).abs() < 1e-14);
        }
    }

    #[test]
    fn nonpositive_f0_rejected() {
        assert!(fixed_point_single(0.0, &params(3)).is_err());
        assert!(fixed_point_single(-1.0, &params(3)).is_err());
    }

    #[test]
    fn general_solver_matches_single_mode() {
        let p = params(40);
        for f0 in [DEFAULT_LAMBDA.powf(-1.0 / 3.0), 1.0, 4.0] {
            let single = fixed_point_single(f0, &p).unwrap();
            let general = fixed_point_general(&ForcingSpec::new(vec![f0]).unwrap(), &p).unwrap();
            for j in 0..=40 {
                let (x, y) = (single.state[j], general.state[j]);
                assert!((x - y).abs() <= 1e-12 * x, "j = {j}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn zero_force_gives_zero_state() {
        let fp =
            fixed_point_general(&ForcingSpec::new(vec![0.0, 0.0]).unwrap(), &params(6)).unwrap();
        assert_eq!(fp.tail_constant, 0.0);
        assert!(fp.state.as_slice().iter().all(|&a| a == 0.0));
    }

    /// Brute-force scan of the consistency residual, independent of the solver's
    /// bracketing: walk C on a fine grid, then interpolate linearly at the sign change.
    fn scan_reference(f: &[f64], lambda: f64) -> f64 {
        let k = f.len() - 1;
        let eval = |c: f64| -> Option<f64> {
            let mut a = vec![0.0; k + 2];
            for (j, slot) in a.iter_mut().enumerate().skip(k) {
                *slot = c * lambda.powf(-(j as f64) / 3.0);
            }
            for j in (1..=k).rev() {
                let sq = lambda * a[j] * a[j + 1] - lambda.powf(1.0 - j as f64) * f[j];
                if sq < 0.0 {
                    return None;
                }
                a[j - 1] = sq.sqrt();
            }
            Some(a[0] * a[1] - f[0])
        };
        let steps = 2_000_000;
        let (c_min, c_max) = (0.0, 10.0);
        let mut prev: Option<(f64, f64)> = None;
        for i in 0..=steps {
            let c = c_min + (c_max - c_min) * i as f64 / steps as f64;
            if let Some(v) = eval(c) {
                if let Some((pc, pv)) = prev {
                    if pv < 0.0 && v >= 0.0 {
                        return pc + (c - pc) * (-pv) / (v - pv);
                    }
                }
                prev = Some((c, v));
            }
        }
        panic!("no sign change");
    }

    #[test]
    fn general_force_two_modes() {
        let f = [1.0, 0.5];
        let scan = scan_reference(&f, DEFAULT_LAMBDA);
        // frozen from a 40-digit bisection of the same consistency condition
        let frozen = 1.431_520_320_622_522;
        assert!((scan - frozen).abs() < 1e-9);

        let p = params(40);
        let fp = fixed_point_general(&ForcingSpec::new(f.to_vec()).unwrap(), &p).unwrap();
        assert!((fp.tail_constant - frozen).abs() < 1e-14);
        assert_eq!(fp.tail_start, 1);
        assert!((fp.state[0] - 1.244_688_888_178_571_3).abs() < 1e-14);
        let forced = ModelParams::new(DEFAULT_LAMBDA, 40, f.to_vec())
            .unwrap()
            .with_closure(Closure::Tail);
        assert!(relative_residual(&forced, &fp.state).unwrap() < 1e-14);
        let small = ModelParams::new(DEFAULT_LAMBDA, 8, f.to_vec())
            .unwrap()
            .with_closure(Closure::Tail);
        let fp8 = fixed_point_general(&ForcingSpec::new(f.to_vec()).unwrap(), &small).unwrap();
        assert!(residual(&small, &fp8.state).unwrap() < 1e-8);
    }

    #[test]
    fn forcing_spec_trims_and_validates() {
        let f = ForcingSpec::new(vec![1.0, 0.0, 2.0, 0.0, 0.0]).unwrap();
        assert_eq!(f.support_end(), 2);
        assert!(ForcingSpec::new(vec![1.0, -0.1]).is_err());
        assert!(ForcingSpec::new(vec![]).unwrap().is_zero());
    }

    #[test]
    fn general_force_with_gap_at_origin() {
        // f_0 = 0: consistency pins a_0 a_1 = 0
        let f = ForcingSpec::new(vec![0.0, 0.0, 1.0]).unwrap();
        let p = ModelParams::new(DEFAULT_LAMBDA, 10, f.values().to_vec())
            .unwrap()
            .with_closure(Closure::Tail);
        let fp = fixed_point_general(&f, &p).unwrap();
        assert!(fp.state[0] * fp.state[1] < 1e-7);
        let r = DEFAULT_LAMBDA.powf(-1.0 / 3.0);
        for j in 2..10 {
            assert!((fp.state[j + 1] / fp.state[j] - r).abs() < 1e-10 * r);
        }
    }

    #[test]
    fn residual_examples() {
        let p = params(10).with_closure(Closure::Tail);
        assert_eq!(residual(&p, &ShellState::zeros(11)).unwrap(), 0.0);

        let forced = ModelParams::single_mode(DEFAULT_LAMBDA, 10, 1.0)
            .unwrap()
            .with_closure(Closure::Tail);
        let fp = fixed_point_single(1.0, &forced).unwrap();
        assert!(residual(&forced, &fp.state).unwrap() < 1e-12);

        let mut v = fp.state.clone().into_vec();
        v[5] += 1e-3;
        let r = residual(&forced, &ShellState::new(v)).unwrap();
        // dominated by shell 6: λ^5 ((a_5 + δ)^2 - a_5^2)
        let expected = DEFAULT_LAMBDA.powi(5) * (2.0 * fp.state[5] * 1e-3 + 1e-6);
        assert!(r > 0.0);
        assert!((r - expected).abs() < 0.01 * expected, "{r} vs {expected}");
    }

    #[test]
    fn orbit_at_unity_is_flat() {
        let orbit = uniqueness_orbit(1.0, 30).unwrap();
        assert_eq!(orbit.len(), 31);
        assert!(orbit.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn orbit_closed_form() {
        assert_eq!(orbit_exponent(10), 683);
        assert_eq!(orbit_exponent(3), -5);
        assert_eq!(orbit_exponent(4), 11);
        let orbit = uniqueness_orbit(1.1, 40).unwrap();
        assert!((orbit[10] - 683.0 * 1.1f64.ln()).abs() < 1e-12);
        assert!((orbit[10] - 65.10).abs() < 0.01);
        for (j, &l) in orbit.iter().enumerate() {
            let closed = orbit_exponent(j as u32) as f64 * 1.1f64.ln();
            assert!((l - closed).abs() <= 1e-9 * closed.abs(), "j = {j}");
        }
    }

    #[test]
    fn orbit_argument_checks() {
        assert!(uniqueness_orbit(0.0, 10).is_err());
        assert!(uniqueness_orbit(1.1, 2).is_err());
    }

    proptest! {
        #[test]
        fn single_mode_relative_residual(f0 in 1e-3f64..=10.0, lambda in 1.01f64..=8.0, n in 1usize..=60) {
            let p = ModelParams::single_mode(lambda, n, f0).unwrap().with_closure(Closure::Tail);
            let fp = fixed_point_single(f0, &p).unwrap();
            prop_assert!(relative_residual(&p, &fp.state).unwrap() < 1e-12);
        }

        #[test]
        fn general_tail_is_geometric(f in prop::collection::vec(0.01f64..3.0, 1..5)) {
            let force = ForcingSpec::new(f.clone()).unwrap();
            let p = ModelParams::new(DEFAULT_LAMBDA, 30, f).unwrap();
            let fp = fixed_point_general(&force, &p).unwrap();
            let r = DEFAULT_LAMBDA.powf(-1.0 / 3.0);
            for j in force.support_end()..30 {
                prop_assert!((fp.state[j + 1] / fp.state[j] - r).abs() < 1e-10 * r);
            }
            let tail = p.clone().with_closure(Closure::Tail);
            prop_assert!(relative_residual(&tail, &fp.state).unwrap() < 1e-10);
        }

        #[test]
        fn rescaling_covariance(f0 in 0.01f64..5.0, gamma in 0.1f64..4.0) {
            let p = params(15);
            let a = fixed_point_single(f0, &p).unwrap();
            let b = fixed_point_single(gamma * gamma * f0, &p).unwrap();
            for j in 0..=15 {
                prop_assert!((b.state[j] - gamma * a.state[j]).abs() < 1e-14 * b.state[j]);
            }
        }

        #[test]
        fn orbit_diverges(a0 in prop_oneof![0.2f64..=0.95, 1.05f64..=3.0]) {
            let orbit = uniqueness_orbit(a0, 15).unwrap();
            prop_assert!(orbit[15].abs() > 1e3);
            for j in 3..15 {
                prop_assert!(orbit[j + 1].abs() > orbit[j].abs());
            }
        }
    }
}
