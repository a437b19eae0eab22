//! Central-difference derivative audits.
//!
//! These are deliberately naive: they only call [`evaluate_residual`] (and, for the
//! Hessian, the analytic gradient) and never touch the determinant templates.

use nalgebra::{DMatrix, Dim, Matrix, Matrix3, RawStorage, Vector3};

use crate::derivatives::{self, CameraDerivativeCache};
use crate::error::Result;
use crate::problem::{evaluate_residual, ScenePoint, TriangulationProblem};

/// Step used for coordinate `value`: `1e-6 · (1 + |value|)`.
pub fn step(value: f64) -> f64 {
    1e-6 * (1.0 + value.abs())
}

fn shifted(point: &ScenePoint, axis: usize, delta: f64) -> ScenePoint {
    let mut p = *point;
    p[axis] += delta;
    p
}

/// Central-difference Jacobian of the residual vector.
pub fn jacobian(problem: &TriangulationProblem, point: &ScenePoint) -> Result<DMatrix<f64>> {
    let mut jac = DMatrix::zeros(2 * problem.len(), 3);
    for axis in 0..3 {
        let h = step(point[axis]);
        let plus = evaluate_residual(problem, &shifted(point, axis, h))?;
        let minus = evaluate_residual(problem, &shifted(point, axis, -h))?;
        jac.set_column(axis, &((plus.residuals - minus.residuals) / (2.0 * h)));
    }
    Ok(jac)
}

/// Central-difference gradient of `½ f`.
pub fn half_cost_gradient(problem: &TriangulationProblem, point: &ScenePoint) -> Result<Vector3<f64>> {
    let mut g = Vector3::zeros();
    for axis in 0..3 {
        let h = step(point[axis]);
        let plus = problem.cost(&shifted(point, axis, h))?;
        let minus = problem.cost(&shifted(point, axis, -h))?;
        g[axis] = 0.5 * (plus - minus) / (2.0 * h);
    }
    Ok(g)
}

/// Central differences of the analytic gradient, symmetrized.
pub fn hessian(
    problem: &TriangulationProblem,
    caches: &[CameraDerivativeCache],
    point: &ScenePoint,
) -> Result<Matrix3<f64>> {
    let grad = |p: &ScenePoint| -> Result<Vector3<f64>> {
        let res = evaluate_residual(problem, p)?;
        derivatives::gradient(problem, caches, p, &res)
    };
    let mut hess = Matrix3::zeros();
    for axis in 0..3 {
        let h = step(point[axis]);
        let col = (grad(&shifted(point, axis, h))? - grad(&shifted(point, axis, -h))?) / (2.0 * h);
        hess.set_column(axis, &col);
    }
    Ok((hess + hess.transpose()) * 0.5)
}

/// Central differences of the Jacobian rows of camera `i`: `(∇²φ_u, ∇²φ_v)`.
pub fn residual_hessians(
    problem: &TriangulationProblem,
    caches: &[CameraDerivativeCache],
    point: &ScenePoint,
    camera: usize,
) -> Result<[Matrix3<f64>; 2]> {
    let mut out = [Matrix3::zeros(); 2];
    for axis in 0..3 {
        let h = step(point[axis]);
        let plus = derivatives::jacobian(problem, caches, &shifted(point, axis, h))?;
        let minus = derivatives::jacobian(problem, caches, &shifted(point, axis, -h))?;
        for (l, m) in out.iter_mut().enumerate() {
            let row = 2 * camera + l;
            for k in 0..3 {
                m[(k, axis)] = (plus[(row, k)] - minus[(row, k)]) / (2.0 * h);
            }
        }
    }
    Ok(out)
}

/// `max|a − b| / max|b|`, the matrix-scaled relative deviation.
pub fn relative_error<R: Dim, C: Dim, S1, S2>(a: &Matrix<f64, R, C, S1>, b: &Matrix<f64, R, C, S2>) -> f64
where
    S1: RawStorage<f64, R, C>,
    S2: RawStorage<f64, R, C>,
{
    let diff = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Analytic-versus-numeric deviations at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeAudit {
    pub jacobian: f64,
    pub gradient: f64,
    pub hessian: f64,
}

impl DerivativeAudit {
    pub const JACOBIAN_TOL: f64 = 1e-6;
    pub const GRADIENT_TOL: f64 = 1e-6;
    pub const HESSIAN_TOL: f64 = 1e-5;

    pub fn passes(&self) -> bool {
        self.jacobian <= Self::JACOBIAN_TOL
            && self.gradient <= Self::GRADIENT_TOL
            && self.hessian <= Self::HESSIAN_TOL
    }
}

/// Gradient deviation scaled by `max (|J|ᵀ|r|)` as well as by the reference, so the
/// audit stays meaningful next to a stationary point where `g` itself cancels to ~0.
pub fn gradient_error(
    analytic: &Vector3<f64>,
    numeric: &Vector3<f64>,
    jacobian: &DMatrix<f64>,
    residuals: &nalgebra::DVector<f64>,
) -> f64 {
    let magnitude = jacobian.abs().transpose() * residuals.abs();
    let scale = numeric.amax().max(magnitude.amax());
    let diff = (analytic - numeric).amax();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

pub fn audit(problem: &TriangulationProblem, point: &ScenePoint) -> Result<DerivativeAudit> {
    let caches = derivatives::build_caches(problem);
    let res = evaluate_residual(problem, point)?;
    let bundle = derivatives::derivative_bundle(problem, &caches, point, &res, true)?;
    Ok(DerivativeAudit {
        jacobian: relative_error(&bundle.jacobian, &jacobian(problem, point)?),
        gradient: gradient_error(&bundle.gradient, &half_cost_gradient(problem, point)?, &bundle.jacobian, &res.residuals),
        hessian: relative_error(
            &bundle.hessian.expect("requested"),
            &hessian(problem, &caches, point)?,
        ),
    })
}
