//! Post-solve diagnostics.
//!
//! * Intrinsic curvature: `K = −(J†)ᵀ (Σ φᵢ ∇²φᵢ) J†` and `ρ² = 1/λ²_max(K)`. A point
//!   with `ρ² >= γ² = f(X)` is expected to be reachable by Gauss-Newton.
//! * Kantorovich distance: `K_LC = ‖H⁻¹ g‖`, the length of the full Newton step.
//! * Numerical L2 optimality: `K_LC <= √ε_mach` and a cost no larger than that of the
//!   symmedian point.

use nalgebra::{DMatrix, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::derivatives::{self, CameraDerivativeCache};
use crate::error::Result;
use crate::linalg;
use crate::problem::{evaluate_residual, ScenePoint, TriangulationProblem};

/// `√(2.22e-16)`, the stationarity threshold on `K_LC`.
pub const KANTOROVICH_THRESHOLD: f64 = 1.49e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoInverse {
    /// `3 x 2n`.
    pub matrix: DMatrix<f64>,
    pub rank: usize,
}

impl PseudoInverse {
    pub fn rank_deficient(&self) -> bool {
        self.rank < 3
    }
}

/// Moore-Penrose pseudo-inverse via the SVD; singular values below
/// `ε · max(m, n) · σ_max` are treated as zero.
pub fn pseudo_inverse_jacobian(jacobian: &DMatrix<f64>) -> PseudoInverse {
    let (rows, cols) = jacobian.shape();
    let svd = jacobian.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tol = f64::EPSILON * rows.max(cols) as f64 * sigma_max;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let matrix = svd
        .pseudo_inverse(tol)
        .unwrap_or_else(|_| DMatrix::zeros(cols, rows));
    PseudoInverse { matrix, rank }
}

/// The `2n x 2n` curvature matrix `K`.
pub fn curvature_matrix(
    problem: &TriangulationProblem,
    caches: &[CameraDerivativeCache],
    point: &ScenePoint,
) -> Result<DMatrix<f64>> {
    let residual = evaluate_residual(problem, point)?;
    let jac = derivatives::jacobian(problem, caches, point)?;
    let second = derivatives::second_order_term(problem, caches, point, &residual)?;
    let pinv = pseudo_inverse_jacobian(&jac).matrix;
    let second = DMatrix::from_iterator(3, 3, second.iter().copied());
    let k = -(pinv.transpose() * second * &pinv);
    Ok((&k + k.transpose()) * 0.5)
}

/// Largest eigenvalue magnitude of a symmetric matrix.
pub fn spectral_radius(k: &DMatrix<f64>) -> f64 {
    if k.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(k.clone())
        .eigenvalues
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Solvability {
    /// `1/λ²_max(K)`; infinite when `K = 0`.
    pub rho_squared: f64,
    /// `f(X)`.
    pub gamma_squared: f64,
    /// `ρ² >= γ²`.
    pub solvable: bool,
}

impl Solvability {
    /// `ρ²/γ²`, for callers that want a stricter margin than the plain inequality.
    pub fn margin(&self) -> f64 {
        self.rho_squared / self.gamma_squared
    }
}

pub fn solvability_check(
    problem: &TriangulationProblem,
    caches: &[CameraDerivativeCache],
    point: &ScenePoint,
) -> Result<Solvability> {
    let k = curvature_matrix(problem, caches, point)?;
    let lambda_max = spectral_radius(&k);
    let rho_squared = if lambda_max == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (lambda_max * lambda_max)
    };
    let gamma_squared = problem.cost(point)?;
    Ok(Solvability {
        rho_squared,
        gamma_squared,
        solvable: rho_squared >= gamma_squared,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kantorovich {
    pub value: f64,
    pub newton_step: Vector3<f64>,
    /// `H` could not be factored; the step came from the pseudo-inverse.
    pub singular: bool,
}

/// `K_LC = ‖H⁻¹ g‖₂` at `point`.
pub fn kantorovich_distance(
    problem: &TriangulationProblem,
    caches: &[CameraDerivativeCache],
    point: &ScenePoint,
) -> Result<Kantorovich> {
    let lin = derivatives::linearize(problem, caches, point, true)?;
    let h = lin.hessian.expect("requested");
    let g = lin.gradient;
    if g.iter().all(|&v| v == 0.0) {
        return Ok(Kantorovich {
            value: 0.0,
            newton_step: Vector3::zeros(),
            singular: false,
        });
    }
    match linalg::solve_symmetric(&h, &g) {
        Some(step) => Ok(Kantorovich {
            value: step.norm(),
            newton_step: -step,
            singular: false,
        }),
        None => {
            let step = h
                .svd(true, true)
                .solve(&g, f64::EPSILON * h.norm())
                .unwrap_or_else(|_| Vector3::repeat(f64::INFINITY));
            Ok(Kantorovich {
                value: step.norm(),
                newton_step: -step,
                singular: true,
            })
        }
    }
}

/// Numerical L2 optimality: a good enough critical point whose cost does not exceed
/// the suboptimal reference.
pub fn optimality_verdict(kantorovich_distance: f64, cost: f64, reference_cost: f64) -> bool {
    kantorovich_distance <= KANTOROVICH_THRESHOLD && cost <= reference_cost
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalityReport {
    pub rho_squared: f64,
    pub gamma_squared: f64,
    pub kantorovich_distance: f64,
    pub solvable_by_curvature: bool,
    pub numerically_l2_optimal: bool,
    pub suboptimal_reference_cost: f64,
}

/// Full diagnostic for `solution`: curvature at `reference` (normally the symmedian
/// point), Kantorovich distance at `solution` and the optimality verdict against the
/// reference cost.
pub fn assess(
    problem: &TriangulationProblem,
    solution: &ScenePoint,
    reference: &ScenePoint,
) -> Result<OptimalityReport> {
    let caches = derivatives::build_caches(problem);
    let solvability = solvability_check(problem, &caches, reference)?;
    let k_lc = kantorovich_distance(problem, &caches, solution)?.value;
    let cost = problem.cost(solution)?;
    Ok(OptimalityReport {
        rho_squared: solvability.rho_squared,
        gamma_squared: solvability.gamma_squared,
        kantorovich_distance: k_lc,
        solvable_by_curvature: solvability.solvable,
        numerically_l2_optimal: optimality_verdict(k_lc, cost, solvability.gamma_squared),
        suboptimal_reference_cost: solvability.gamma_squared,
    })
}
