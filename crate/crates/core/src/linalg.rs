//! Small dense helpers for 3x3 symmetric systems.

use nalgebra::{Matrix3, Vector3};

/// Ratio of extreme eigenvalue magnitudes of a symmetric matrix. Infinite when singular.
pub fn symmetric_condition(a: &Matrix3<f64>) -> f64 {
    let eig = a.symmetric_eigenvalues();
    let max = eig.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let min = eig.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `a x = b` for symmetric `a`: Cholesky first, full-pivoting LU when `a` is not
/// numerically positive definite.
pub fn solve_symmetric(a: &Matrix3<f64>, b: &Vector3<f64>) -> Option<Vector3<f64>> {
    if let Some(chol) = a.cholesky() {
        let x = chol.solve(b);
        if x.iter().all(|v| v.is_finite()) {
            return Some(x);
        }
    }
    a.full_piv_lu().solve(b).filter(|x| x.iter().all(|v| v.is_finite()))
}

/// Cheap lower bound on the 2-norm condition number from a Cholesky factor's diagonal.
pub(crate) fn cholesky_condition_estimate(l: &Matrix3<f64>) -> f64 {
    let d = l.diagonal();
    let max = d.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let min = d.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        (max / min).powi(2)
    }
}
