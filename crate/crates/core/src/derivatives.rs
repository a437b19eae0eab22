//! Exact first and second derivatives of the reprojection residuals.
//!
//! For a camera with image rows `a` (one of the first two rows) and depth row `c`,
//! define the camera-only 2x2 determinants
//!
//! ```text
//! Δ[m][j] = a_m c_j − a_j c_m        (m ∈ 1..=3, j ∈ 1..=4)
//! ```
//!
//! With `X° = (x, y, z, 1)`, `λ = c·X°` and `D_m = Σ_j Δ[m][j] X°_j`, the residual
//! `φ = a·X°/λ − u` has
//!
//! ```text
//! ∂φ/∂x_m        = D_m / λ²
//! ∂²φ/∂x_m∂x_k   = (Δ[m][k] λ − 2 c_k D_m) / λ³
//! ```
//!
//! Both numerators are linear in `X°` with camera-only coefficients, so each camera
//! carries a 2x12 matrix `j_num` (first derivatives, applied through the 12x3
//! block lift of `X°`) and a 12x4 matrix `h_num` (the six distinct second partials of
//! each of its two residuals). Nothing here uses finite differences.
//!
//! `gradient` and `hessian` are those of `½f`: `g = Jᵀr`, `H = JᵀJ + Σ φᵢ ∇²φᵢ`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, Matrix2x3, Matrix3, Matrix3x4, SMatrix, Vector3, Vector4};

use crate::error::Result;
use crate::problem::{lift, view_residual, CameraMatrix, CostSum, ResidualEvaluation, ScenePoint, TriangulationProblem, DEPTH_EPSILON};

pub type JacobianTemplate = SMatrix<f64, 2, 12>;
pub type HessianTemplate = SMatrix<f64, 12, 4>;
pub type KronLift = SMatrix<f64, 12, 3>;

/// Row/column index pairs `(m, k)` of the six distinct entries of a symmetric 3x3
/// matrix, in the order `h_num` stores them.
pub const SYMMETRIC_INDEX: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

/// Camera-only derivative data, built once per camera.
#[derive(Debug, Clone)]
pub struct CameraDerivativeCache {
    p: Matrix3x4<f64>,
    /// `deltas[l][m][j]` for image row `l ∈ {0, 1}`; `deltas[l][m][m] == 0`.
    deltas: [[[f64; 4]; 3]; 2],
    j_num: JacobianTemplate,
    h_num: OnceLock<HessianTemplate>,
}

impl PartialEq for CameraDerivativeCache {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p
    }
}

/// Builds the determinant table and first-derivative template for `camera`.
/// The second-derivative template is filled in on first use.
pub fn build_cache(camera: &CameraMatrix) -> CameraDerivativeCache {
    let p = *camera.matrix();
    let mut deltas = [[[0.0; 4]; 3]; 2];
    for (l, table) in deltas.iter_mut().enumerate() {
        for (m, row) in table.iter_mut().enumerate() {
            for (j, d) in row.iter_mut().enumerate() {
                if j != m {
                    *d = p[(l, m)] * p[(2, j)] - p[(l, j)] * p[(2, m)];
                }
            }
        }
    }
    let j_num = JacobianTemplate::from_fn(|l, col| deltas[l][col / 4][col % 4]);
    CameraDerivativeCache {
        p,
        deltas,
        j_num,
        h_num: OnceLock::new(),
    }
}

pub fn build_caches(problem: &TriangulationProblem) -> Vec<CameraDerivativeCache> {
    problem.cameras().iter().map(build_cache).collect()
}

impl CameraDerivativeCache {
    /// Determinant `Δ` for image row `row ∈ {1, 2}` and 1-based indices `m ∈ 1..=3`,
    /// `j ∈ 1..=4`.
    pub fn determinant(&self, row: usize, m: usize, j: usize) -> f64 {
        self.deltas[row - 1][m - 1][j - 1]
    }

    /// The 18 off-diagonal determinants in `(row, m, j)` order, 1-based.
    pub fn determinants(&self) -> impl Iterator<Item = ((usize, usize, usize), f64)> + '_ {
        (0..2).flat_map(move |l| {
            (0..3).flat_map(move |m| {
                (0..4)
                    .filter(move |&j| j != m)
                    .map(move |j| ((l + 1, m + 1, j + 1), self.deltas[l][m][j]))
            })
        })
    }

    pub fn j_num(&self) -> &JacobianTemplate {
        &self.j_num
    }

    /// `h_num[6l + s][j] = Δ[m][k] c_j − 2 c_k Δ[m][j]` where `(m, k) = SYMMETRIC_INDEX[s]`.
    pub fn h_num(&self) -> &HessianTemplate {
        self.h_num.get_or_init(|| {
            let c = self.p.row(2);
            HessianTemplate::from_fn(|row, j| {
                let l = row / 6;
                let (m, k) = SYMMETRIC_INDEX[row % 6];
                let d = &self.deltas[l];
                d[m][k] * c[j] - 2.0 * c[k] * d[m][j]
            })
        })
    }

    #[cfg(test)]
    pub(crate) fn has_h_num(&self) -> bool {
        self.h_num.get().is_some()
    }

    #[inline]
    fn depth(&self, xh: &Vector4<f64>) -> f64 {
        self.p.row(2).dot(&xh.transpose())
    }

    /// `∂(φ_u, φ_v)/∂X` at `X°` with depth `λ`: `j_num · Kron(X°) / λ²`.
    #[inline]
    pub fn jacobian_block(&self, xh: &Vector4<f64>, depth: f64) -> Matrix2x3<f64> {
        let inv2 = 1.0 / (depth * depth);
        Matrix2x3::from_fn(|l, m| {
            self.j_num.fixed_view::<1, 4>(l, 4 * m).dot(&xh.transpose()) * inv2
        })
    }

    /// `(∇²φ_u, ∇²φ_v)` at `X°` with depth `λ`: unpacked from `h_num · X° / λ³`.
    pub fn second_derivatives(&self, xh: &Vector4<f64>, depth: f64) -> [Matrix3<f64>; 2] {
        let h12 = self.h_num() * xh / (depth * depth * depth);
        let unpack = |offset: usize| {
            let mut h = Matrix3::zeros();
            for (s, &(m, k)) in SYMMETRIC_INDEX.iter().enumerate() {
                h[(m, k)] = h12[offset + s];
                h[(k, m)] = h12[offset + s];
            }
            h
        };
        [unpack(0), unpack(6)]
    }
}

/// `I₃ ⊗ X°`: the 12x3 block-diagonal stack of `(x, y, z, 1)`.
pub fn kron_lift(point: &ScenePoint) -> KronLift {
    let xh = lift(point);
    let mut k = KronLift::zeros();
    for b in 0..3 {
        k.fixed_view_mut::<4, 1>(4 * b, b).copy_from(&xh);
    }
    k
}

fn checked_depth(cache: &CameraDerivativeCache, xh: &Vector4<f64>, index: usize) -> Result<f64> {
    let depth = cache.depth(xh);
    if depth.abs() <= DEPTH_EPSILON || !depth.is_finite() {
        return Err(crate::Error::DepthNearZero {
            camera: index,
            depth,
        });
    }
    Ok(depth)
}

/// Full `2n x 3` Jacobian of the residual vector.
pub fn jacobian(
    problem: &TriangulationProblem,
    caches: &[CameraDerivativeCache],
    point: &ScenePoint,
) -> Result<DMatrix<f64>> {
    debug_assert_eq!(problem.len(), caches.len());
    let xh = lift(point);
    let mut jac = DMatrix::zeros(2 * caches.len(), 3);
    for (i, cache) in caches.iter().enumerate() {
        let depth = checked_depth(cache, &xh, i)?;
        jac.fixed_view_mut::<2, 3>(2 * i, 0)
            .copy_from(&cache.jacobian_block(&xh, depth));
    }
    Ok(jac)
}

/// `g = Jᵀ r` with `r` evaluated at the same point.
pub fn gradient(
    problem: &TriangulationProblem,
    caches: &[CameraDerivativeCache],
    point: &ScenePoint,
    residual: &ResidualEvaluation,
) -> Result<Vector3<f64>> {
    let jac = jacobian(problem, caches, point)?;
    Ok(jac.tr_mul(&residual.residuals).fixed_rows::<3>(0).into_owned())
}

/// `Σ φᵢ ∇²φᵢ`, the part of the Hessian that Gauss-Newton drops.
pub fn second_order_term(
    problem: &TriangulationProblem,
    caches: &[CameraDerivativeCache],
    point: &ScenePoint,
    residual: &ResidualEvaluation,
) -> Result<Matrix3<f64>> {
    debug_assert_eq!(problem.len(), caches.len());
    let xh = lift(point);
    let mut s = Matrix3::zeros();
    for (i, cache) in caches.iter().enumerate() {
        let depth = checked_depth(cache, &xh, i)?;
        let [hu, hv] = cache.second_derivatives(&xh, depth);
        let (ru, rv) = residual.pair(i);
        s += hu * ru + hv * rv;
    }
    Ok(s)
}

/// Full Hessian `JᵀJ + Σ φᵢ ∇²φᵢ`.
pub fn hessian(
    problem: &TriangulationProblem,
    caches: &[CameraDerivativeCache],
    point: &ScenePoint,
    residual: &ResidualEvaluation,
) -> Result<Matrix3<f64>> {
    let jac = jacobian(problem, caches, point)?;
    let jtj: Matrix3<f64> = (jac.transpose() * &jac).fixed_view::<3, 3>(0, 0).into_owned();
    Ok(jtj + second_order_term(problem, caches, point, residual)?)
}

/// Jacobian, gradient, Gauss-Newton matrix and (optionally) the full Hessian.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeBundle {
    pub jacobian: DMatrix<f64>,
    pub gradient: Vector3<f64>,
    pub gauss_newton_matrix: Matrix3<f64>,
    pub hessian: Option<Matrix3<f64>>,
}

/// Evaluates the derivative bundle; the Hessian is built only when `with_hessian` is set.
pub fn derivative_bundle(
    problem: &TriangulationProblem,
    caches: &[CameraDerivativeCache],
    point: &ScenePoint,
    residual: &ResidualEvaluation,
    with_hessian: bool,
) -> Result<DerivativeBundle> {
    let jacobian = jacobian(problem, caches, point)?;
    let gradient = jacobian.tr_mul(&residual.residuals).fixed_rows::<3>(0).into_owned();
    let gauss_newton_matrix: Matrix3<f64> = jacobian.tr_mul(&jacobian).fixed_view::<3, 3>(0, 0).into_owned();
    let hessian = if with_hessian {
        Some(gauss_newton_matrix + second_order_term(problem, caches, point, residual)?)
    } else {
        None
    };
    Ok(DerivativeBundle {
        jacobian,
        gradient,
        gauss_newton_matrix,
        hessian,
    })
}

/// Cost and derivatives at one point, accumulated camera by camera without
/// materializing `J`. This is what the iterative solvers use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linearization {
    pub cost: f64,
    pub gradient: Vector3<f64>,
    pub gauss_newton_matrix: Matrix3<f64>,
    pub hessian: Option<Matrix3<f64>>,
}

pub fn linearize(
    problem: &TriangulationProblem,
    caches: &[CameraDerivativeCache],
    point: &ScenePoint,
    with_hessian: bool,
) -> Result<Linearization> {
    debug_assert_eq!(problem.len(), caches.len());
    let xh = lift(point);
    let mut cost = CostSum::default();
    let mut gradient = Vector3::zeros();
    let mut jtj = Matrix3::zeros();
    let mut second = Matrix3::zeros();
    for (i, (cache, obs)) in caches.iter().zip(problem.observations()).enumerate() {
        let depth = checked_depth(cache, &xh, i)?;
        let view = view_residual(&cache.p, &xh, obs.u, obs.v);
        cost.add(&view);
        let r = nalgebra::Vector2::new(view.du(), view.dv());
        let jb = cache.jacobian_block(&xh, depth);
        gradient += jb.tr_mul(&r);
        jtj += jb.tr_mul(&jb);
        if with_hessian {
            let [hu, hv] = cache.second_derivatives(&xh, depth);
            second += hu * r.x + hv * r.y;
        }
    }
    Ok(Linearization {
        cost: cost.value(),
        gradient,
        gauss_newton_matrix: jtj,
        hessian: with_hessian.then(|| jtj + second),
    })
}
