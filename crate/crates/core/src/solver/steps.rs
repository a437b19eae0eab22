//! Step kernels shared by the iterative methods.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::linalg::cholesky_condition_estimate;

/// Relative Tikhonov shift applied once before declaring a system singular.
pub const TIKHONOV_SHIFT: f64 = 1e-12;

/// Largest acceptable condition number of `JᵀJ`.
pub const MAX_GAUSS_NEWTON_CONDITION: f64 = 1e14;

/// Newton-Raphson step `d = −H⁻¹ g`.
///
/// Returns [`Error::IndefiniteHessian`] when `H` has a clearly negative eigenvalue, so
/// the caller can substitute a Gauss-Newton step.
pub fn newton_step(g: &Vector3<f64>, h: &Matrix3<f64>) -> Result<Vector3<f64>> {
    if g.iter().all(|&v| v == 0.0) {
        return Ok(Vector3::zeros());
    }
    if let Some(chol) = h.cholesky() {
        return Ok(-chol.solve(g));
    }
    let eig = h.symmetric_eigenvalues();
    let scale = eig.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if eig.iter().any(|&e| e < -f64::EPSILON * scale) {
        return Err(Error::IndefiniteHessian);
    }
    let shifted = h + Matrix3::identity() * (TIKHONOV_SHIFT * h.trace());
    shifted
        .cholesky()
        .map(|chol| -chol.solve(g))
        .ok_or(Error::SingularSystem)
}

/// Gauss-Newton step `s = −(JᵀJ)⁻¹ g`.
pub fn gauss_newton_step(g: &Vector3<f64>, jtj: &Matrix3<f64>) -> Result<Vector3<f64>> {
    if g.iter().all(|&v| v == 0.0) {
        return Ok(Vector3::zeros());
    }
    let attempt = |a: &Matrix3<f64>| {
        a.cholesky()
            .filter(|chol| cholesky_condition_estimate(&chol.l()) <= MAX_GAUSS_NEWTON_CONDITION)
            .map(|chol| -chol.solve(g))
    };
    attempt(jtj)
        .or_else(|| attempt(&(jtj + Matrix3::identity() * (TIKHONOV_SHIFT * jtj.trace()))))
        .ok_or(Error::SingularSystem)
}

/// Levenberg-Marquardt step `p = −(JᵀJ + μI)⁻¹ g`. With `μ = 0` this is exactly
/// [`gauss_newton_step`].
pub fn lm_step(g: &Vector3<f64>, jtj: &Matrix3<f64>, mu: f64) -> Result<Vector3<f64>> {
    debug_assert!(mu >= 0.0);
    if mu == 0.0 {
        return gauss_newton_step(g, jtj);
    }
    let damped = jtj + Matrix3::identity() * mu;
    match damped.cholesky() {
        Some(chol) => Ok(-chol.solve(g)),
        None => damped
            .full_piv_lu()
            .solve(&-g)
            .ok_or(Error::SingularSystem),
    }
}

/// Damping `μ = ‖r‖^δ` from the current residual norm.
pub fn lm_damping(residual_norm: f64, exponent: f64) -> f64 {
    residual_norm.powf(exponent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn newton_identity() {
        let d = newton_step(&Vector3::new(1.0, 2.0, 3.0), &Matrix3::identity()).unwrap();
        assert_eq!(d, Vector3::new(-1.0, -2.0, -3.0));
    }

    #[test]
    fn newton_rejects_indefinite() {
        let h = Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, 1.0));
        assert_eq!(newton_step(&Vector3::x(), &h), Err(Error::IndefiniteHessian));
    }

    #[test]
    fn newton_singular_psd() {
        assert_eq!(newton_step(&Vector3::x(), &Matrix3::zeros()), Err(Error::SingularSystem));
    }

    #[test]
    fn gauss_newton_zero_gradient_and_singular() {
        assert_eq!(gauss_newton_step(&Vector3::zeros(), &Matrix3::zeros()).unwrap(), Vector3::zeros());
        // The Tikhonov shift rescues a rank-deficient matrix when g lies in its range.
        let rank_two = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0));
        let s = gauss_newton_step(&Vector3::x(), &rank_two).unwrap();
        assert_relative_eq!(s, -Vector3::x(), epsilon = 1e-11);
        assert_eq!(gauss_newton_step(&Vector3::x(), &Matrix3::zeros()), Err(Error::SingularSystem));
    }

    #[test]
    fn gauss_newton_solves_linear_least_squares_in_one_step() {
        // r(X) = A X − b; from X = 0, g = −Aᵀb and JᵀJ = AᵀA.
        let a = nalgebra::Matrix4x3::new(1.0, 2.0, 0.0, 0.0, 1.0, -1.0, 3.0, 0.0, 1.0, 1.0, 1.0, 1.0);
        let b = nalgebra::Vector4::new(1.0, -2.0, 0.5, 3.0);
        let s = gauss_newton_step(&(-a.transpose() * b), &(a.transpose() * a)).unwrap();
        let lsq = a.svd(true, true).solve(&b, 1e-14).unwrap();
        assert_relative_eq!(s, lsq, epsilon = 1e-12);
    }

    #[test]
    fn lm_limits() {
        let jtj = Matrix3::new(4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0);
        let g = Vector3::new(1.0, -2.0, 0.5);
        assert_eq!(lm_step(&g, &jtj, 0.0).unwrap(), gauss_newton_step(&g, &jtj).unwrap());
        let p = lm_step(&g, &jtj, 1e12).unwrap();
        let cos = p.dot(&-g) / (p.norm() * g.norm());
        assert!(cos.clamp(-1.0, 1.0).acos() < 1e-6);
        assert!(p.norm() < 1e-11);
    }
}
