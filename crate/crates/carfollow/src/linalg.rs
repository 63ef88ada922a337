//! Small dense linear-algebra helpers built around a pivot-checked Cholesky.
//!
//! Matrices here are at most a few hundred rows (GP blocks), so plain dense
//! O(n^3) factorizations are the right tool. The factorization rejects
//! pivots below a relative floor so that effectively singular matrices fail
//! instead of silently producing garbage factors.

use nalgebra::{DMatrix, DVector};

/// Relative pivot floor: pivot j must exceed `PIVOT_RTOL * m[j][j]`, so
/// effectively singular matrices fail regardless of overall scaling.
const PIVOT_RTOL: f64 = 1e-12;

/// Lower-triangular Cholesky factor of a symmetric matrix, or `None` when
/// the matrix is not (numerically) positive definite.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "cholesky needs a square matrix");
    if n == 0 {
        return Some(DMatrix::zeros(0, 0));
    }

    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        let floor = PIVOT_RTOL * m[(j, j)].abs();
        if !(d.is_finite() && d > floor && d > 0.0) {
            return None;
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / dj;
        }
    }
    Some(l)
}

/// Solve `L x = b` for lower-triangular `L`.
pub fn solve_lower(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[(i, k)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solve `L^T x = b` for lower-triangular `L`.
pub fn solve_lower_transpose(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solve `(L L^T) x = b`.
pub fn spd_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    solve_lower_transpose(l, &solve_lower(l, b))
}

/// `log det (L L^T) = 2 * sum(log diag L)`.
pub fn log_det_from_cholesky(l: &DMatrix<f64>) -> f64 {
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// Full inverse of `L L^T` from its Cholesky factor.
pub fn inverse_from_cholesky(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut inv = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut e = DVector::<f64>::zeros(n);
        e[j] = 1.0;
        let col = spd_solve(l, &e);
        inv.set_column(j, &col);
    }
    // Exact symmetry despite per-column rounding.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            inv[(i, j)] = v;
            inv[(j, i)] = v;
        }
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_spd(n: usize, rng: &mut crate::rng::SimRng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen::<f64>() - 0.5);
        &a * a.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn factor_matches_product() {
        let mut rng = crate::rng::rng_from_seed(1);
        for n in [1usize, 3, 8, 20] {
            let m = random_spd(n, &mut rng);
            let l = cholesky_lower(&m).expect("spd");
            let rebuilt = &l * l.transpose();
            let err = (&rebuilt - &m).norm() / m.norm();
            assert!(err < 1e-12, "n={n} err={err}");
        }
    }

    #[test]
    fn solves_and_logdet_match_dense_oracle() {
        let mut rng = crate::rng::rng_from_seed(2);
        let m = random_spd(6, &mut rng);
        let l = cholesky_lower(&m).unwrap();
        let b = DVector::from_fn(6, |i, _| (i as f64 + 1.0) / 3.0);
        let x = spd_solve(&l, &b);
        let x_oracle = m.clone().try_inverse().unwrap() * &b;
        assert!((x - &x_oracle).norm() < 1e-10);
        let logdet_oracle = m.determinant().ln();
        assert!((log_det_from_cholesky(&l) - logdet_oracle).abs() < 1e-10);
        let inv = inverse_from_cholesky(&l);
        assert!((inv - m.try_inverse().unwrap()).norm() < 1e-10);
    }

    #[test]
    fn rejects_indefinite_and_singular() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(cholesky_lower(&m).is_none());
        // Rank-1 outer product is singular.
        let c = DVector::from_column_slice(&[1.0, 0.2, 0.02]);
        let rank1 = &c * c.transpose();
        assert!(cholesky_lower(&rank1).is_none());
    }
}
