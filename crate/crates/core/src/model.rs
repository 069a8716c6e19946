//! Model state, parameters, right-hand side and the energy/norm/flux functionals.
//!
//! The truncated system on shells `0..=N` reads
//!
//! ```text
//! da_0/dt = -a_0 a_1 + f_0
//! da_j/dt = λ^{j-1} a_{j-1}^2 - λ^j a_j a_{j+1} + f_j,   1 <= j <= N
//! ```
//!
//! with `a_{N+1}` supplied by a [`Closure`]. The Sobolev weights are `2^{2sj}`
//! (one shell per octave in |k|) independently of λ.

use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// λ = 2^{5/2}, the three-dimensional scaling base.
pub const DEFAULT_LAMBDA: f64 = 4.0 * std::f64::consts::SQRT_2;

/// How the missing coefficient `a_{N+1}` is supplied at the top shell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Closure {
    /// `a_{N+1} = 0`. The nonlinear sums telescope exactly, so energy is
    /// conserved up to forcing work and every box energy is nondecreasing.
    #[default]
    Galerkin,
    /// `a_{N+1} = λ^{-1/3} a_N`, the geometric continuation of the fixed-point
    /// tail. Energy leaves through the top shell at rate `λ^{N-1/3} a_N^3`,
    /// and the infinite-system fixed point restricted to `0..=N` is stationary.
    Tail,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    lambda: f64,
    n_shells: usize,
    forcing: Vec<f64>,
    #[serde(default)]
    closure: Closure,
}

/// Immutable run configuration: scaling base, truncation index and forcing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    lambda: f64,
    n_shells: usize,
    forcing: Vec<f64>,
    closure: Closure,
    // λ^j for j = 0..=N
    lambda_pow: Vec<f64>,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        Ok(ModelParams::new(raw.lambda, raw.n_shells, raw.forcing)?.with_closure(raw.closure))
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        RawParams {
            lambda: p.lambda,
            n_shells: p.n_shells,
            forcing: p.forcing,
            closure: p.closure,
        }
    }
}

impl ModelParams {
    /// `forcing` may be shorter than `N + 1` (missing entries are zero); entries
    /// beyond shell `N` must be zero.
    pub fn new(lambda: f64, n_shells: usize, mut forcing: Vec<f64>) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 1.0) {
            return Err(Error::Config(format!("lambda must be > 1, got {lambda}")));
        }
        if n_shells < 1 {
            return Err(Error::Config(format!(
                "n_shells must be >= 1, got {n_shells}"
            )));
        }
        if let Some((j, f)) = forcing
            .iter()
            .enumerate()
            .find(|(_, f)| !(f.is_finite() && **f >= 0.0))
        {
            return Err(Error::Config(format!(
                "forcing f_{j} = {f} must be finite and >= 0"
            )));
        }
        if forcing.len() > n_shells + 1 {
            if forcing[n_shells + 1..].iter().any(|&f| f != 0.0) {
                return Err(Error::Config(format!(
                    "forcing has nonzero entries beyond n_shells = {n_shells}"
                )));
            }
            forcing.truncate(n_shells + 1);
        }
        forcing.resize(n_shells + 1, 0.0);
        let lambda_pow = (0..=n_shells as i32).map(|j| lambda.powi(j)).collect();
        Ok(ModelParams {
            lambda,
            n_shells,
            forcing,
            closure: Closure::Galerkin,
            lambda_pow,
        })
    }

    /// Single-mode forcing `f = (f_0, 0, 0, ...)`.
    pub fn single_mode(lambda: f64, n_shells: usize, f0: f64) -> Result<Self> {
        Self::new(lambda, n_shells, vec![f0])
    }

    pub fn with_closure(mut self, closure: Closure) -> Self {
        self.closure = closure;
        self
    }

    /// Same λ, forcing and closure on a different truncation.
    pub fn with_shells(&self, n_shells: usize) -> Result<Self> {
        Ok(Self::new(self.lambda, n_shells, self.forcing.clone())?.with_closure(self.closure))
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n_shells(&self) -> usize {
        self.n_shells
    }

    pub fn forcing(&self) -> &[f64] {
        &self.forcing
    }

    pub fn closure(&self) -> Closure {
        self.closure
    }

    pub fn dim(&self) -> usize {
        self.n_shells + 1
    }

    pub(crate) fn lambda_pow(&self, j: usize) -> f64 {
        self.lambda_pow[j]
    }

    /// Value of `a_{N+1}` implied by the closure.
    fn boundary(&self, a: &[f64]) -> f64 {
        match self.closure {
            Closure::Galerkin => 0.0,
            Closure::Tail => self.lambda.powf(-1.0 / 3.0) * a[self.n_shells],
        }
    }

    pub fn check_len(&self, state: &ShellState) -> Result<()> {
        if state.len() != self.dim() {
            return Err(Error::LengthMismatch {
                expected: self.dim(),
                got: state.len(),
            });
        }
        Ok(())
    }

    /// Allocation-free right-hand side used by the integrators.
    pub fn rhs_into(&self, a: &[f64], out: &mut [f64]) {
        let n = self.n_shells;
        debug_assert_eq!(a.len(), n + 1);
        let top = self.boundary(a);
        for j in 0..=n {
            let next = if j < n { a[j + 1] } else { top };
            let mut d = self.forcing[j] - self.lambda_pow[j] * a[j] * next;
            if j > 0 {
                d += self.lambda_pow[j - 1] * a[j - 1] * a[j - 1];
            }
            out[j] = d;
        }
    }

    /// Tridiagonal Jacobian of the right-hand side: `lower[j-1] = ∂f_j/∂a_{j-1}`,
    /// `diag[j] = ∂f_j/∂a_j`, `upper[j] = ∂f_j/∂a_{j+1}`.
    pub fn jacobian_into(&self, a: &[f64], lower: &mut [f64], diag: &mut [f64], upper: &mut [f64]) {
        let n = self.n_shells;
        for j in 0..n {
            diag[j] = -self.lambda_pow[j] * a[j + 1];
            upper[j] = -self.lambda_pow[j] * a[j];
            lower[j] = 2.0 * self.lambda_pow[j] * a[j];
        }
        diag[n] = match self.closure {
            Closure::Galerkin => 0.0,
            Closure::Tail => -2.0 * self.lambda_pow[n] * self.lambda.powf(-1.0 / 3.0) * a[n],
        };
    }

    /// Frozen damping rates `k_j = λ^j a_{j+1}` of the integrating-factor form.
    pub(crate) fn damping_into(&self, a: &[f64], k: &mut [f64]) {
        let n = self.n_shells;
        for j in 0..n {
            k[j] = self.lambda_pow[j] * a[j + 1];
        }
        k[n] = self.lambda_pow[n] * self.boundary(a);
    }
}

/// Coefficients `(a_0, ..., a_N)`; `a_j^2` is the total energy of shell `2^j <= |k| < 2^{j+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ShellState(Vec<f64>);

impl ShellState {
    pub fn new(a: Vec<f64>) -> Self {
        ShellState(a)
    }

    pub fn zeros(dim: usize) -> Self {
        ShellState(vec![0.0; dim])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn n_shells(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Shell energies `a_j^2` (the spectrum convention `E(2^j) := a_j^2`).
    pub fn shell_energies(&self) -> Vec<f64> {
        self.0.iter().map(|a| a * a).collect()
    }
}

impl From<Vec<f64>> for ShellState {
    fn from(a: Vec<f64>) -> Self {
        ShellState(a)
    }
}

impl Index<usize> for ShellState {
    type Output = f64;

    fn index(&self, j: usize) -> &f64 {
        &self.0[j]
    }
}

/// `da_j/dt`, one entry per shell of the state it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivative(pub Vec<f64>);

impl Derivative {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

pub fn rhs(params: &ModelParams, state: &ShellState) -> Result<Derivative> {
    params.check_len(state)?;
    let mut out = vec![0.0; state.len()];
    params.rhs_into(state.as_slice(), &mut out);
    Ok(Derivative(out))
}

/// `E = ½ Σ a_j^2`.
pub fn energy(state: &ShellState) -> f64 {
    0.5 * state.0.iter().map(|a| a * a).sum::<f64>()
}

/// `(Σ 2^{2sj} a_j^2)^{1/2}`.
pub fn sobolev_norm(state: &ShellState, s: f64) -> f64 {
    state
        .0
        .iter()
        .enumerate()
        .map(|(j, a)| (2.0 * s * j as f64).exp2() * a * a)
        .sum::<f64>()
        .sqrt()
}

/// Energy of the box `B_J`: `Σ_{j >= J} ½ a_j^2`.
pub fn box_energy(state: &ShellState, shell: usize) -> Result<f64> {
    if shell >= state.len() {
        return Err(Error::ShellOutOfRange {
            index: shell,
            min: 0,
            max: state.n_shells(),
        });
    }
    Ok(0.5 * state.0[shell..].iter().map(|a| a * a).sum::<f64>())
}

/// Flux into `B_J`: `λ^{J-1} a_{J-1}^2 a_J` for `1 <= J <= N`.
pub fn energy_flux(params: &ModelParams, state: &ShellState, shell: usize) -> Result<f64> {
    params.check_len(state)?;
    if shell < 1 || shell > params.n_shells() {
        return Err(Error::ShellOutOfRange {
            index: shell,
            min: 1,
            max: params.n_shells(),
        });
    }
    let prev = state[shell - 1];
    Ok(params.lambda_pow(shell - 1) * prev * prev * state[shell])
}

/// l² distance between two states of equal length.
pub fn distance(state: &ShellState, reference: &ShellState) -> Result<f64> {
    if state.len() != reference.len() {
        return Err(Error::LengthMismatch {
            expected: reference.len(),
            got: state.len(),
        });
    }
    Ok(state
        .0
        .iter()
        .zip(&reference.0)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}
