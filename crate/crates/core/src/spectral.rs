//! Linearization about the normalized fixed point `a_j = λ^{-j/3}` (forcing
//! `f_0 = λ^{-1/3}`) and its real spectrum.
//!
//! Perturbations `b_j = c_j e^{μt}` satisfy
//! `λ^{-1/6} c_{j+1} + α_j c_j - 2λ^{-5/6} c_{j-1} = 0` with
//! `α_j = λ^{-1/6}(λ^{-1/3} + λ^{-2j/3} μ)`. The ratios
//! `d_j = λ^{-1/6} c_{j+1}/c_j` obey `d_{j-1} = 2λ^{-1}/(α_j + d_j)`, a continued
//! fraction evaluated here by backward recurrence from a deep seed. The
//! eigenvalues are the real zeros of `X(μ) = α_0(μ) + d_0(μ)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Derivative;

/// Default root-search window and grid resolution.
pub const DEFAULT_MU_MIN: f64 = -8.0;
pub const DEFAULT_MU_MAX: f64 = -0.05;
pub const DEFAULT_GRID_POINTS: usize = 400;

/// Sign changes whose bisection chain sees `|X|` above this are poles.
const POLE_BOUND: f64 = 1e3;
/// `|X(μ)|` accepted as a root by [`eigenvector`].
const ROOT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfConfig {
    /// Number of levels below the seed in the first evaluation; doubled until converged.
    pub depth: usize,
    /// Value assigned to the deepest `d_j`; `None` seeds with the limit `λ^{-1/2}`.
    pub tail_seed: Option<f64>,
    /// Convergence threshold on successive depth doublings (relative once `|d| > 1`).
    pub tolerance: f64,
    pub max_depth: usize,
}

impl Default for CfConfig {
    fn default() -> Self {
        CfConfig {
            depth: 100,
            tail_seed: None,
            tolerance: 1e-14,
            max_depth: 1 << 20,
        }
    }
}

impl CfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 10 {
            return Err(Error::Config(format!(
                "depth must be >= 10, got {}",
                self.depth
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config(format!(
                "tolerance must be > 0, got {}",
                self.tolerance
            )));
        }
        if self.max_depth < self.depth {
            return Err(Error::Config("max_depth must be >= depth".into()));
        }
        Ok(())
    }

    fn seed(&self, lambda: f64) -> f64 {
        self.tail_seed.unwrap_or_else(|| lambda.powf(-0.5))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenResult {
    pub mu: f64,
    /// Eigenvector coefficients `c_0..=c_N`, normalized so `c_0 = 1`.
    pub c: Vec<f64>,
    /// Relative defect of the eigen-equation on shells `0..N` (see [`eigen_residual`]).
    pub residual: f64,
    pub cf_depth_used: usize,
}

pub fn alpha(j: usize, mu: f64, lambda: f64) -> f64 {
    lambda.powf(-1.0 / 6.0) * (lambda.powf(-1.0 / 3.0) + lambda.powf(-2.0 * j as f64 / 3.0) * mu)
}

/// `d_lowest..=d_top` by backward recurrence from `d_top = seed`.
fn sweep(mu: f64, lowest: usize, top: usize, seed: f64, lambda: f64) -> Result<Vec<f64>> {
    let two_over_lambda = 2.0 / lambda;
    let mut d = vec![0.0; top - lowest + 1];
    d[top - lowest] = seed;
    for j in (lowest + 1..=top).rev() {
        let pivot = alpha(j, mu, lambda) + d[j - lowest];
        let next = two_over_lambda / pivot;
        if pivot == 0.0 || !next.is_finite() {
            return Err(Error::Pole { j, mu });
        }
        d[j - 1 - lowest] = next;
    }
    Ok(d)
}

/// `(d_n, depth)` with the depth at which successive doublings agreed.
fn cf_tail_converged(mu: f64, n: usize, cfg: &CfConfig, lambda: f64) -> Result<(f64, usize)> {
    cfg.validate()?;
    let seed = cfg.seed(lambda);
    let mut depth = cfg.depth;
    let mut value = sweep(mu, n, n + depth, seed, lambda)?[0];
    while depth * 2 <= cfg.max_depth {
        depth *= 2;
        let next = sweep(mu, n, n + depth, seed, lambda)?[0];
        if (next - value).abs() < cfg.tolerance * next.abs().max(1.0) {
            return Ok((next, depth));
        }
        value = next;
    }
    Err(Error::NoConvergence { mu, depth })
}

/// `d_n = [α_{n+1}, α_{n+2}, ...]`.
pub fn cf_tail(mu: f64, n: usize, cfg: &CfConfig, lambda: f64) -> Result<f64> {
    cf_tail_converged(mu, n, cfg, lambda).map(|(d, _)| d)
}

/// Characteristic function `X(μ) = α_0(μ) + d_0(μ)`.
pub fn characteristic_x(mu: f64, cfg: &CfConfig, lambda: f64) -> Result<f64> {
    Ok(alpha(0, mu, lambda) + cf_tail(mu, 0, cfg, lambda)?)
}

/// `|X(μ) - α_0(μ) - 2λ^{-1}/X(λ^{-2/3}μ)|`; at λ = 2^{5/2} the last term is `1/(2^{3/2} X)`.
pub fn functional_identity_residual(mu: f64, cfg: &CfConfig, lambda: f64) -> Result<f64> {
    let x = characteristic_x(mu, cfg, lambda)?;
    let inner = characteristic_x(lambda.powf(-2.0 / 3.0) * mu, cfg, lambda)?;
    Ok((x - alpha(0, mu, lambda) - 2.0 / (lambda * inner)).abs())
}

fn bisect(
    mut lo: f64,
    mut hi: f64,
    mut f_lo: f64,
    cfg: &CfConfig,
    lambda: f64,
) -> Result<Option<f64>> {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = match characteristic_x(mid, cfg, lambda) {
            Ok(v) => v,
            Err(Error::Pole { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        if f_mid.abs() > POLE_BOUND {
            return Ok(None);
        }
        if f_mid == 0.0 {
            return Ok(Some(mid));
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    let value = characteristic_x(root, cfg, lambda)?;
    Ok((value.abs() <= POLE_BOUND).then_some(root))
}

/// Real zeros of `X` on `[mu_lo, mu_hi]`, ascending.
///
/// Every sign change between adjacent grid points is refined by bisection; sign
/// changes across a pole of the continued fraction are recognized by `|X|`
/// growing without bound along the bisection chain and dropped. Completeness
/// is only claimed up to the grid resolution.
pub fn find_eigenvalues(
    mu_lo: f64,
    mu_hi: f64,
    grid_points: usize,
    cfg: &CfConfig,
    lambda: f64,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if !(mu_lo < mu_hi) || grid_points < 2 {
        return Err(Error::Config(format!(
            "need mu_lo < mu_hi and at least 2 grid points, got [{mu_lo}, {mu_hi}] with {grid_points}"
        )));
    }
    let grid: Vec<f64> = (0..grid_points)
        .map(|i| mu_lo + (mu_hi - mu_lo) * i as f64 / (grid_points - 1) as f64)
        .collect();
    let values: Vec<Option<f64>> = grid
        .par_iter()
        .map(|&mu| match characteristic_x(mu, cfg, lambda) {
            Ok(v) => Ok(Some(v)),
            Err(Error::Pole { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;

    let mut roots = Vec::new();
    for i in 0..grid_points - 1 {
        let (Some(a), Some(b)) = (values[i], values[i + 1]) else {
            continue;
        };
        let (lo, hi) = (grid[i], grid[i + 1]);
        if a == 0.0 {
            roots.push(lo);
            continue;
        }
        if b == 0.0 {
            // exact zeros are reported by the cell they start
            if i + 2 == grid_points {
                roots.push(hi);
            }
            continue;
        }
        if (a > 0.0) == (b > 0.0) {
            continue;
        }
        let found = bisect(lo, hi, a, cfg, lambda).map_err(|e| Error::Bracket {
            lo,
            hi,
            source: Box::new(e),
        })?;
        roots.extend(found);
    }
    Ok(roots)
}

/// Evaluates the grid used by [`find_eigenvalues`] for plotting: `(μ, X(μ))`,
/// with `NaN` where the continued fraction hits a pole exactly.
pub fn x_grid(
    mu_lo: f64,
    mu_hi: f64,
    grid_points: usize,
    cfg: &CfConfig,
    lambda: f64,
) -> Result<Vec<(f64, f64)>> {
    cfg.validate()?;
    let n = grid_points.max(2);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mu = mu_lo + (mu_hi - mu_lo) * i as f64 / (n - 1) as f64;
            match characteristic_x(mu, cfg, lambda) {
                Ok(v) => Ok((mu, v)),
                Err(Error::Pole { .. }) => Ok((mu, f64::NAN)),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Linearized perturbation dynamics with `b_{N+1} = 0`:
/// `db_0/dt = -λ^{-1/3} b_0 - b_1`,
/// `db_j/dt = λ^{2j/3}(2λ^{-2/3} b_{j-1} - λ^{-1/3} b_j - b_{j+1})`.
pub fn linearized_rhs(b: &[f64], lambda: f64) -> Derivative {
    let n = b.len();
    let l13 = lambda.powf(-1.0 / 3.0);
    let l23 = lambda.powf(-2.0 / 3.0);
    let out = (0..n)
        .map(|j| {
            let next = if j + 1 < n { b[j + 1] } else { 0.0 };
            if j == 0 {
                -l13 * b[0] - next
            } else {
                lambda.powf(2.0 * j as f64 / 3.0) * (2.0 * l23 * b[j - 1] - l13 * b[j] - next)
            }
        })
        .collect();
    Derivative(out)
}

/// Max over shells `0..N` of `|L(c)_j - μ c_j|` divided by the magnitude of the
/// terms that make up equation `j`. The top shell is excluded because it
/// depends on the truncated `c_{N+1}`.
pub fn eigen_residual(c: &[f64], mu: f64, lambda: f64) -> f64 {
    let n = c.len();
    let lin = linearized_rhs(c, lambda);
    let l13 = lambda.powf(-1.0 / 3.0);
    let l23 = lambda.powf(-2.0 / 3.0);
    let mut worst = 0.0f64;
    for j in 0..n.saturating_sub(1) {
        let weight = if j == 0 {
            1.0
        } else {
            lambda.powf(2.0 * j as f64 / 3.0)
        };
        let prev = if j == 0 {
            0.0
        } else {
            2.0 * l23 * c[j - 1].abs()
        };
        let scale = weight * (prev + l13 * c[j].abs() + c[j + 1].abs()) + (mu * c[j]).abs();
        let defect = (lin.0[j] - mu * c[j]).abs();
        if defect > 0.0 {
            worst = worst.max(defect / scale);
        }
    }
    worst
}

/// Eigenvector for a root `μ` of `X`: `c_0 = 1`, `c_{j+1} = λ^{1/6} d_j c_j`.
pub fn eigenvector(mu: f64, n_shells: usize, cfg: &CfConfig, lambda: f64) -> Result<EigenResult> {
    let x = characteristic_x(mu, cfg, lambda)?;
    if !(x.abs() <= ROOT_TOLERANCE) {
        return Err(Error::NotARoot { mu, value: x.abs() });
    }
    let (_, depth) = cf_tail_converged(mu, n_shells, cfg, lambda)?;
    let d = sweep(mu, 0, n_shells + depth, cfg.seed(lambda), lambda)?;
    let step = lambda.powf(1.0 / 6.0);
    let mut c = Vec::with_capacity(n_shells + 1);
    c.push(1.0);
    for j in 0..n_shells {
        let last = c[j];
        c.push(step * d[j] * last);
    }
    let residual = eigen_residual(&c, mu, lambda);
    Ok(EigenResult {
        mu,
        c,
        residual,
        cf_depth_used: depth,
    })
}
