//! Five-stage, L-stable, stiffly accurate SDIRK method of order 4 with an
//! embedded order-3 solution (γ = 1/4, Hairer & Wanner table 6.5).
//! Stage equations are solved by Newton iteration on the tridiagonal matrix
//! `I - hγJ`; the error estimate is filtered through `I - hγJ(y_n)`.

use super::tridiag::TridiagLu;
use super::{scaled_max, Attempt, SolverOptions};
use crate::model::ModelParams;

pub(crate) const GAMMA: f64 = 0.25;
pub(crate) const A: [[f64; 5]; 5] = [
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [0.5, 0.25, 0.0, 0.0, 0.0],
    [17.0 / 50.0, -1.0 / 25.0, 0.25, 0.0, 0.0],
    [371.0 / 1360.0, -137.0 / 2720.0, 15.0 / 544.0, 0.25, 0.0],
    [25.0 / 24.0, -49.0 / 48.0, 125.0 / 16.0, -85.0 / 12.0, 0.25],
];
pub(crate) const B_HAT: [f64; 5] = [59.0 / 48.0, -17.0 / 96.0, 225.0 / 32.0, -85.0 / 12.0, 0.0];

const NEWTON_MAX_ITER: usize = 12;
/// Newton correction, in units of the error tolerance, accepted as converged.
const NEWTON_TOL: f64 = 1e-3;

pub(crate) struct Sdirk {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    k: [Vec<f64>; 5],
    base: Vec<f64>,
    z: Vec<f64>,
    f: Vec<f64>,
    delta: Vec<f64>,
    pub(crate) rhs_evals: u64,
    pub(crate) newton_iters: u64,
}

impl Sdirk {
    pub(crate) fn new(dim: usize) -> Self {
        let v = || vec![0.0; dim];
        Sdirk {
            lower: vec![0.0; dim - 1],
            diag: v(),
            upper: vec![0.0; dim - 1],
            k: [v(), v(), v(), v(), v()],
            base: v(),
            z: v(),
            f: v(),
            delta: v(),
            rhs_evals: 0,
            newton_iters: 0,
        }
    }

    pub(crate) const ERROR_EXPONENT: f64 = 0.25;

    /// `I - hγJ(a)`, factorized.
    fn iteration_matrix(&mut self, params: &ModelParams, a: &[f64], hg: f64) -> Option<TridiagLu> {
        let dim = a.len();
        params.jacobian_into(a, &mut self.lower, &mut self.diag, &mut self.upper);
        for j in 0..dim {
            self.diag[j] = 1.0 - hg * self.diag[j];
        }
        for j in 0..dim - 1 {
            self.lower[j] *= -hg;
            self.upper[j] *= -hg;
        }
        TridiagLu::factor(&self.lower, &self.diag, &self.upper)
    }

    pub(crate) fn attempt(
        &mut self,
        params: &ModelParams,
        y: &[f64],
        h: f64,
        opts: &SolverOptions,
        out: &mut [f64],
    ) -> Attempt {
        let dim = y.len();
        let hg = h * GAMMA;
        let Some(filter) = self.iteration_matrix(params, y, hg) else {
            return Attempt::NewtonFailed;
        };

        for stage in 0..5 {
            for j in 0..dim {
                let mut acc = 0.0;
                for (prev, a) in A[stage][..stage].iter().enumerate() {
                    acc += a * self.k[prev][j];
                }
                self.base[j] = y[j] + h * acc;
                // the explicit predictor y + hγF(y) is useless on stiff data
                self.z[j] = if stage == 0 {
                    self.base[j]
                } else {
                    self.base[j] + hg * self.k[stage - 1][j]
                };
            }
            let mut prev_norm = f64::INFINITY;
            let mut converged = false;
            for iter in 0..NEWTON_MAX_ITER {
                // full Newton: the tridiagonal factorization costs as much as one F evaluation
                let z = std::mem::take(&mut self.z);
                let lu = self.iteration_matrix(params, &z, hg);
                self.z = z;
                let Some(lu) = lu else {
                    return Attempt::NewtonFailed;
                };
                params.rhs_into(&self.z, &mut self.f);
                self.rhs_evals += 1;
                self.newton_iters += 1;
                for j in 0..dim {
                    self.delta[j] = self.base[j] + hg * self.f[j] - self.z[j];
                }
                lu.solve(&mut self.delta);
                for j in 0..dim {
                    self.z[j] += self.delta[j];
                }
                let norm = scaled_max(&self.delta, y, &self.z, opts);
                if !norm.is_finite() {
                    return Attempt::NonFinite;
                }
                if norm <= NEWTON_TOL {
                    converged = true;
                    break;
                }
                if iter > 1 && norm >= prev_norm {
                    return Attempt::NewtonFailed;
                }
                prev_norm = norm;
            }
            if !converged {
                return Attempt::NewtonFailed;
            }
            for j in 0..dim {
                self.k[stage][j] = (self.z[j] - self.base[j]) / hg;
            }
        }
        out.copy_from_slice(&self.z);
        for j in 0..dim {
            let mut e = 0.0;
            for stage in 0..5 {
                e += (A[4][stage] - B_HAT[stage]) * self.k[stage][j];
            }
            self.delta[j] = h * e;
        }
        filter.solve(&mut self.delta);
        let err = scaled_max(&self.delta, y, out, opts);
        if !err.is_finite() || out.iter().any(|v| !v.is_finite()) {
            return Attempt::NonFinite;
        }
        Attempt::Done { err }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_conditions() {
        let c: Vec<f64> = A.iter().map(|row| row.iter().sum()).collect();
        for (ci, want) in c.iter().zip([0.25, 0.75, 11.0 / 20.0, 0.5, 1.0]) {
            assert!((ci - want).abs() < 1e-15);
        }
        let ac: Vec<f64> = (0..5)
            .map(|i| (0..5).map(|k| A[i][k] * c[k]).sum())
            .collect();
        let ac2: Vec<f64> = (0..5)
            .map(|i| (0..5).map(|k| A[i][k] * c[k] * c[k]).sum())
            .collect();
        let aac: Vec<f64> = (0..5)
            .map(|i| (0..5).map(|k| A[i][k] * ac[k]).sum())
            .collect();
        let dot = |w: &[f64], v: &dyn Fn(usize) -> f64| (0..5).map(|i| w[i] * v(i)).sum::<f64>();
        let b = A[4];
        let upto3 = |w: &[f64]| {
            assert!((dot(w, &|_| 1.0) - 1.0).abs() < 1e-14);
            assert!((dot(w, &|i| c[i]) - 0.5).abs() < 1e-14);
            assert!((dot(w, &|i| c[i] * c[i]) - 1.0 / 3.0).abs() < 1e-14);
            assert!((dot(w, &|i| ac[i]) - 1.0 / 6.0).abs() < 1e-14);
        };
        upto3(&b);
        upto3(&B_HAT);
        assert!((dot(&b, &|i| c[i].powi(3)) - 0.25).abs() < 1e-14);
        assert!((dot(&b, &|i| c[i] * ac[i]) - 0.125).abs() < 1e-14);
        assert!((dot(&b, &|i| ac2[i]) - 1.0 / 12.0).abs() < 1e-14);
        assert!((dot(&b, &|i| aac[i]) - 1.0 / 24.0).abs() < 1e-14);
        // embedded solution is genuinely lower order
        assert!((dot(&B_HAT, &|i| aac[i]) - 1.0 / 24.0).abs() > 1e-3);
    }
}
