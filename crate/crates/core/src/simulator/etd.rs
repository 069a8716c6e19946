//! Second-order exponential time differencing (ETD2RK) with the damping rates
//! `k_j = λ^j a_{j+1}` frozen at the start of each step. The loss term
//! `-λ^j a_j a_{j+1}` is integrated exactly for frozen `k`; the remainder
//! `N(u) = F(u) + k∘u` is treated explicitly.

use super::{scaled_max, Attempt, SolverOptions};
use crate::model::ModelParams;

fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-5 {
        1.0 + z * (0.5 + z / 6.0)
    } else {
        z.exp_m1() / z
    }
}

fn phi2(z: f64) -> f64 {
    if z.abs() < 1e-3 {
        0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z / 120.0))
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

pub(crate) struct Etd {
    k: Vec<f64>,
    n0: Vec<f64>,
    n1: Vec<f64>,
    u1: Vec<f64>,
    corr: Vec<f64>,
    pub(crate) rhs_evals: u64,
}

impl Etd {
    pub(crate) fn new(dim: usize) -> Self {
        let v = || vec![0.0; dim];
        Etd {
            k: v(),
            n0: v(),
            n1: v(),
            u1: v(),
            corr: v(),
            rhs_evals: 0,
        }
    }

    pub(crate) const ERROR_EXPONENT: f64 = 0.5;

    pub(crate) fn attempt(
        &mut self,
        params: &ModelParams,
        y: &[f64],
        h: f64,
        opts: &SolverOptions,
        out: &mut [f64],
    ) -> Attempt {
        let dim = y.len();
        params.damping_into(y, &mut self.k);
        params.rhs_into(y, &mut self.n0);
        for j in 0..dim {
            self.n0[j] += self.k[j] * y[j];
            let z = -self.k[j] * h;
            self.u1[j] = z.exp() * y[j] + h * phi1(z) * self.n0[j];
        }
        params.rhs_into(&self.u1, &mut self.n1);
        self.rhs_evals += 2;
        for j in 0..dim {
            self.n1[j] += self.k[j] * self.u1[j];
            self.corr[j] = h * phi2(-self.k[j] * h) * (self.n1[j] - self.n0[j]);
            out[j] = self.u1[j] + self.corr[j];
        }
        let err = scaled_max(&self.corr, y, out, opts);
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
    fn phi_functions_continuous_at_switch() {
        for z in [-1e-5, -1e-3, -0.5, -30.0] {
            let (a, b) = (phi1(z * (1.0 - 1e-9)), phi1(z * (1.0 + 1e-9)));
            assert!((a - b).abs() < 1e-8);
            let (a, b) = (phi2(z * (1.0 - 1e-9)), phi2(z * (1.0 + 1e-9)));
            assert!((a - b).abs() < 1e-8);
        }
        assert!((phi1(-1.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((phi2(-1.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(phi1(0.0), 1.0);
        assert_eq!(phi2(0.0), 0.5);
    }
}
