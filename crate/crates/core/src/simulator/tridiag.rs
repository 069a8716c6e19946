//! LU factorization with partial pivoting of a tridiagonal matrix, in the
//! LAPACK `gttrf`/`gtts2` layout (one extra superdiagonal from row swaps).

#[derive(Debug, Clone)]
pub(crate) struct TridiagLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    /// `lower[i]` is entry `(i+1, i)`, `upper[i]` is entry `(i, i+1)`.
    /// Returns `None` when a pivot is exactly zero.
    pub(crate) fn factor(lower: &[f64], diag: &[f64], upper: &[f64]) -> Option<Self> {
        let n = diag.len();
        debug_assert!(lower.len() + 1 == n && upper.len() + 1 == n);
        let mut dl = lower.to_vec();
        let mut d = diag.to_vec();
        let mut du = upper.to_vec();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] != 0.0 {
                    let fact = dl[i] / d[i];
                    dl[i] = fact;
                    d[i + 1] -= fact * du[i];
                }
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -fact;
                }
                swapped[i] = true;
            }
        }
        if d.iter().any(|&p| p == 0.0 || !p.is_finite()) {
            return None;
        }
        Some(TridiagLu {
            dl,
            d,
            du,
            du2,
            swapped,
        })
    }

    /// Overwrites `b` with the solution of `A x = b`.
    pub(crate) fn solve(&self, b: &mut [f64]) {
        let n = self.d.len();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_solve(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
        let n = diag.len();
        let mut m = vec![vec![0.0; n + 1]; n];
        for i in 0..n {
            m[i][i] = diag[i];
            if i + 1 < n {
                m[i][i + 1] = upper[i];
                m[i + 1][i] = lower[i];
            }
            m[i][n] = rhs[i];
        }
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
                .unwrap();
            m.swap(col, piv);
            for row in col + 1..n {
                let f = m[row][col] / m[col][col];
                for k in col..=n {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| m[i][k] * x[k]).sum();
            x[i] = (m[i][n] - s) / m[i][i];
        }
        x
    }

    #[test]
    fn one_by_one() {
        let lu = TridiagLu::factor(&[], &[4.0], &[]).unwrap();
        let mut b = [2.0];
        lu.solve(&mut b);
        assert_eq!(b[0], 0.5);
    }

    #[test]
    fn singular_is_rejected() {
        assert!(TridiagLu::factor(&[1.0], &[1.0, 1.0], &[1.0]).is_none());
    }

    #[test]
    fn pivoting_needed() {
        let (l, d, u) = ([1.0, 1.0], [0.0, 0.0, 1.0], [1.0, 1.0]);
        let rhs = [1.0, 2.0, 3.0];
        let mut x = rhs;
        TridiagLu::factor(&l, &d, &u).unwrap().solve(&mut x);
        let want = dense_solve(&l, &d, &u, &rhs);
        for (a, b) in x.iter().zip(&want) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn matches_dense_elimination(
            n in 2usize..30,
            seed in proptest::collection::vec(-10.0f64..10.0, 4 * 30),
        ) {
            let lower = &seed[0..n - 1];
            let upper = &seed[30..30 + n - 1];
            let diag: Vec<f64> = seed[60..60 + n].iter().map(|d| d + 25.0 * d.signum()).collect();
            let rhs = &seed[90..90 + n];
            let mut x = rhs.to_vec();
            TridiagLu::factor(lower, &diag, upper).unwrap().solve(&mut x);
            let want = dense_solve(lower, &diag, upper, rhs);
            for (a, b) in x.iter().zip(&want) {
                prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn residual_small_without_dominance(
            n in 2usize..20,
            seed in proptest::collection::vec(-1.0f64..1.0, 4 * 20),
        ) {
            let lower = &seed[0..n - 1];
            let upper = &seed[20..20 + n - 1];
            let diag = &seed[40..40 + n];
            let rhs = &seed[60..60 + n];
            if let Some(lu) = TridiagLu::factor(lower, diag, upper) {
                let mut x = rhs.to_vec();
                lu.solve(&mut x);
                let want = dense_solve(lower, diag, upper, rhs);
                let scale = want.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                prop_assume!(scale < 1e6);
                for (a, b) in x.iter().zip(&want) {
                    prop_assert!((a - b).abs() <= 1e-8 * scale);
                }
            }
        }
    }
}
