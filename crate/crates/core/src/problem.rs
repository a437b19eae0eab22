//! Pinhole cameras, observations and the reprojection cost.
//!
//! For a camera `P` with rows `a₁, a₂, c` and a scene point `X` with homogeneous
//! lift `X° = (x, y, z, 1)`, the projective depth is `λ = c·X°` and the image
//! point is `(a₁·X°/λ, a₂·X°/λ)`. The residual vector stacks, per camera,
//! `(û − u, v̂ − v)` and the cost is the plain sum of squared residuals (no ½).

use std::sync::Arc;

use nalgebra::{DVector, Matrix3, Matrix3x4, Point3, Vector3, Vector4};

use crate::error::{Error, Result};

/// Projective depths with `|λ|` at or below this value are treated as degenerate.
pub const DEPTH_EPSILON: f64 = 1e-12;

/// Relative threshold on `|det M| / ‖M‖³` below which a camera's left 3x3 block is
/// considered singular.
pub const SINGULAR_CAMERA_TOL: f64 = 1e-14;

pub type ScenePoint = Point3<f64>;

/// A 3x4 pinhole projection matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraMatrix {
    label: Arc<str>,
    p: Matrix3x4<f64>,
}

impl CameraMatrix {
    /// Builds a camera, rejecting non-finite entries and a singular left 3x3 block.
    pub fn new(label: impl Into<Arc<str>>, p: Matrix3x4<f64>) -> Result<Self> {
        let label = label.into();
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteCamera {
                label: label.to_string(),
            });
        }
        let m: Matrix3<f64> = p.fixed_columns::<3>(0).into_owned();
        let det = m.determinant();
        if det.abs() <= SINGULAR_CAMERA_TOL * m.norm().powi(3) {
            return Err(Error::SingularCamera {
                label: label.to_string(),
                det,
            });
        }
        Ok(Self { label, p })
    }

    /// Row-major convenience constructor.
    pub fn from_rows(label: impl Into<Arc<str>>, rows: [[f64; 4]; 3]) -> Result<Self> {
        let p = Matrix3x4::from_fn(|r, c| rows[r][c]);
        Self::new(label, p)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub(crate) fn shared_label(&self) -> Arc<str> {
        self.label.clone()
    }

    pub fn matrix(&self) -> &Matrix3x4<f64> {
        &self.p
    }

    /// Left 3x3 block `M`.
    pub fn left_block(&self) -> Matrix3<f64> {
        self.p.fixed_columns::<3>(0).into_owned()
    }

    /// Fourth column `p₄`.
    pub fn translation_column(&self) -> Vector3<f64> {
        self.p.column(3).into_owned()
    }

    /// Projective depth `λ = c·X°` (third row applied to the homogeneous point).
    #[inline]
    pub fn depth(&self, point: &ScenePoint) -> f64 {
        self.p.row(2).dot(&lift(point).transpose())
    }

    /// Projects `point`, failing when it lies on the principal plane.
    pub fn project(&self, point: &ScenePoint) -> Result<Projection> {
        self.project_indexed(point, 0)
    }

    #[inline]
    pub(crate) fn project_indexed(&self, point: &ScenePoint, index: usize) -> Result<Projection> {
        let h = self.p * lift(point);
        let depth = h.z;
        if depth.abs() <= DEPTH_EPSILON || !depth.is_finite() {
            return Err(Error::DepthNearZero {
                camera: index,
                depth,
            });
        }
        Ok(Projection {
            u: h.x / depth,
            v: h.y / depth,
            depth,
        })
    }
}

impl CameraMatrix {
    /// Residuals and depth of one view, carried in double-double.
    ///
    /// The numerators `(a − u c)·X°` and the depth `c·X°` are compensated dot
    /// products and the quotient keeps its remainder, so the residual is accurate to
    /// about `ε²` relative. Cost comparisons then resolve steps far below `√ε`.
    #[inline]
    pub(crate) fn residual_indexed(
        &self,
        point: &ScenePoint,
        obs: &ImageObservation,
        index: usize,
    ) -> Result<ViewResidual> {
        let xh = lift(point);
        let r = view_residual(&self.p, &xh, obs.u, obs.v);
        if r.depth.abs() <= DEPTH_EPSILON || !r.depth.is_finite() {
            return Err(Error::DepthNearZero {
                camera: index,
                depth: r.depth,
            });
        }
        Ok(r)
    }
}

/// Residual pair of one view, each an unevaluated sum `hi + lo`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ViewResidual {
    pub depth: f64,
    u: (f64, f64),
    v: (f64, f64),
}

impl ViewResidual {
    pub fn du(&self) -> f64 {
        self.u.0 + self.u.1
    }

    pub fn dv(&self) -> f64 {
        self.v.0 + self.v.1
    }
}

/// `(û − u, v̂ − v)` for camera matrix `p` and lifted point `xh`.
#[inline]
pub(crate) fn view_residual(p: &Matrix3x4<f64>, xh: &Vector4<f64>, u: f64, v: f64) -> ViewResidual {
    let depth = dot2((0..4).map(|j| (p[(2, j)], xh[j])));
    let numerator = |row: usize, target: f64| dot2((0..4).map(|j| (p[(row, j)] - target * p[(2, j)], xh[j])));
    ViewResidual {
        depth: depth.0 + depth.1,
        u: div2(numerator(0, u), depth),
        v: div2(numerator(1, v), depth),
    }
}

/// Sum of squared residuals accumulated in double-double and rounded once.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CostSum {
    hi: f64,
    lo: f64,
}

impl CostSum {
    pub fn add(&mut self, r: &ViewResidual) {
        for (h, l) in [r.u, r.v] {
            let sq = h * h;
            let sq_err = h.mul_add(h, -sq) + 2.0 * h * l;
            let (s, e) = two_sum(self.hi, sq);
            self.hi = s;
            self.lo += e + sq_err;
        }
    }

    pub fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let z = s - a;
    (s, (a - (s - z)) + (b - z))
}

/// Dot product with error-free transformations, returned as `hi + lo`.
#[inline]
fn dot2(terms: impl Iterator<Item = (f64, f64)>) -> (f64, f64) {
    let mut sum = 0.0;
    let mut err = 0.0;
    for (a, b) in terms {
        let p = a * b;
        let (s, e) = two_sum(sum, p);
        err += e + a.mul_add(b, -p);
        sum = s;
    }
    two_sum(sum, err)
}

/// `(nh + nl) / (dh + dl)` as `hi + lo`.
#[inline]
fn div2((nh, nl): (f64, f64), (dh, dl): (f64, f64)) -> (f64, f64) {
    let q = nh / dh;
    let rem = (-q).mul_add(dh, nh) + nl - q * dl;
    (q, rem / dh)
}

/// Homogeneous lift `X° = (x, y, z, 1)`.
#[inline]
pub fn lift(point: &ScenePoint) -> Vector4<f64> {
    point.to_homogeneous()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// An observed image point together with the label of the camera that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageObservation {
    pub u: f64,
    pub v: f64,
    pub camera: Arc<str>,
}

impl ImageObservation {
    pub fn new(u: f64, v: f64, camera: impl Into<Arc<str>>) -> Self {
        Self {
            u,
            v,
            camera: camera.into(),
        }
    }
}

/// `n >= 2` cameras and their index-aligned observations of one scene point.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangulationProblem {
    cameras: Vec<CameraMatrix>,
    observations: Vec<ImageObservation>,
}

impl TriangulationProblem {
    pub fn new(cameras: Vec<CameraMatrix>, observations: Vec<ImageObservation>) -> Result<Self> {
        if cameras.len() != observations.len() {
            return Err(Error::ViewCountMismatch {
                cameras: cameras.len(),
                observations: observations.len(),
            });
        }
        if cameras.len() < 2 {
            return Err(Error::TooFewViews(cameras.len()));
        }
        if let Some(index) = observations
            .iter()
            .position(|o| !(o.u.is_finite() && o.v.is_finite()))
        {
            return Err(Error::NonFiniteObservation { index });
        }
        Ok(Self {
            cameras,
            observations,
        })
    }

    /// Pairs each camera with an observation `(u, v)`; observation labels are taken
    /// from the cameras.
    pub fn from_pixels(cameras: Vec<CameraMatrix>, pixels: &[(f64, f64)]) -> Result<Self> {
        let observations = cameras
            .iter()
            .zip(pixels)
            .map(|(c, &(u, v))| ImageObservation::new(u, v, c.shared_label()))
            .collect::<Vec<_>>();
        if observations.len() != pixels.len() {
            return Err(Error::ViewCountMismatch {
                cameras: cameras.len(),
                observations: pixels.len(),
            });
        }
        Self::new(cameras, observations)
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn cameras(&self) -> &[CameraMatrix] {
        &self.cameras
    }

    pub fn observations(&self) -> &[ImageObservation] {
        &self.observations
    }

    pub fn views(&self) -> impl Iterator<Item = (&CameraMatrix, &ImageObservation)> {
        self.cameras.iter().zip(&self.observations)
    }

    /// Sum of squared reprojection errors without materializing the residual vector.
    pub fn cost(&self, point: &ScenePoint) -> Result<f64> {
        let mut cost = CostSum::default();
        for (i, (camera, obs)) in self.views().enumerate() {
            cost.add(&camera.residual_indexed(point, obs, i)?);
        }
        Ok(cost.value())
    }
}

/// Residual vector, projective depths and cost at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualEvaluation {
    /// `(û₁ − u₁, v̂₁ − v₁, û₂ − u₂, ...)`, length `2n`.
    pub residuals: DVector<f64>,
    pub depths: DVector<f64>,
    pub cost: f64,
}

impl ResidualEvaluation {
    /// Residual pair of camera `i`.
    pub fn pair(&self, i: usize) -> (f64, f64) {
        (self.residuals[2 * i], self.residuals[2 * i + 1])
    }

    pub fn norm(&self) -> f64 {
        self.residuals.norm()
    }
}

/// Projects `point` through one camera. Equivalent to [`CameraMatrix::project`].
pub fn project(camera: &CameraMatrix, point: &ScenePoint) -> Result<Projection> {
    camera.project(point)
}

/// Evaluates `r(X)`, the depths `λᵢ` and `f(X) = Σ rⱼ²`.
///
/// Negative depths are accepted; only `|λᵢ| <= DEPTH_EPSILON` is an error.
pub fn evaluate_residual(
    problem: &TriangulationProblem,
    point: &ScenePoint,
) -> Result<ResidualEvaluation> {
    let n = problem.len();
    let mut residuals = DVector::zeros(2 * n);
    let mut depths = DVector::zeros(n);
    let mut cost = CostSum::default();
    for (i, (camera, obs)) in problem.views().enumerate() {
        let r = camera.residual_indexed(point, obs, i)?;
        residuals[2 * i] = r.du();
        residuals[2 * i + 1] = r.dv();
        depths[i] = r.depth;
        cost.add(&r);
    }
    let cost = cost.value();
    Ok(ResidualEvaluation {
        residuals,
        depths,
        cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;
    use approx::assert_relative_eq;

    fn canonical() -> CameraMatrix {
        CameraMatrix::from_rows(
            "I",
            [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]],
        )
        .unwrap()
    }

    #[test]
    fn p1_maps_origin_to_origin_at_unit_depth() {
        let p1 = &synthetic::cameras()[0];
        let proj = p1.project(&ScenePoint::origin()).unwrap();
        assert_eq!((proj.u, proj.v, proj.depth), (0.0, 0.0, 1.0));
    }

    #[test]
    fn canonical_camera_perspective_division() {
        let proj = canonical().project(&ScenePoint::new(2.0, 4.0, 2.0)).unwrap();
        assert_eq!((proj.u, proj.v, proj.depth), (1.0, 2.0, 2.0));
    }

    #[test]
    fn p2_at_sa2_optimum() {
        // Row evaluation by hand for X = (-3, -2, 7)/11:
        //   row1 = (-1,-1,-1,0)·X° = -2/11, row2 = (1,0,-1,1)·X° = 1/11,
        //   row3 = (0,0,1,1)·X° = 18/11  =>  (û, v̂) = (-1/9, 1/18).
        let p2 = &synthetic::cameras()[1];
        let x = ScenePoint::new(-3.0 / 11.0, -2.0 / 11.0, 7.0 / 11.0);
        let proj = p2.project(&x).unwrap();
        assert_relative_eq!(proj.u, -1.0 / 9.0, epsilon = 1e-15);
        assert_relative_eq!(proj.v, 1.0 / 18.0, epsilon = 1e-15);
        assert_relative_eq!(proj.depth, 18.0 / 11.0, epsilon = 1e-15);
        // P1 gives (-3/18, -2/18); total cost = 1/18 as listed for SA2.
        let problem = synthetic::sa2();
        let eval = evaluate_residual(&problem, &x).unwrap();
        assert_relative_eq!(eval.cost, 1.0 / 18.0, epsilon = 1e-15);
        assert_relative_eq!(eval.residuals[2], -1.0 / 9.0, epsilon = 1e-15);
        assert_relative_eq!(eval.residuals[3], 1.0 / 18.0, epsilon = 1e-15);
    }

    #[test]
    fn principal_plane_is_rejected() {
        let err = canonical().project(&ScenePoint::new(1.0, 1.0, 0.0));
        assert!(matches!(err, Err(Error::DepthNearZero { .. })));
        let problem = synthetic::sa2();
        // P1 depth z + 1 vanishes at z = -1.
        let err = evaluate_residual(&problem, &ScenePoint::new(0.3, 0.2, -1.0));
        assert!(matches!(err, Err(Error::DepthNearZero { camera: 0, .. })));
    }

    #[test]
    fn negative_depth_is_allowed() {
        let proj = canonical().project(&ScenePoint::new(1.0, 1.0, -2.0)).unwrap();
        assert_eq!(proj.depth, -2.0);
        assert_eq!((proj.u, proj.v), (-0.5, -0.5));
    }

    #[test]
    fn sa2_and_con_costs_at_listed_optima() {
        let x = ScenePoint::new(-0.272727272727273, -0.181818181818182, 0.636363636363636);
        let eval = evaluate_residual(&synthetic::sa2(), &x).unwrap();
        assert!((eval.cost - 0.055555555555556).abs() <= 1e-12);

        let x = ScenePoint::new(1.424098078272550, -1.238341159147880, 0.115482211291935);
        let eval = evaluate_residual(&synthetic::con(), &x).unwrap();
        assert!((eval.cost - 1.223123745015136).abs() <= 1e-12);
    }

    #[test]
    fn zero_residual_when_observations_are_exact() {
        // Depths 1, 1, 1, 2: every projection is exact.
        let x = ScenePoint::new(1.0, -1.0, 0.0);
        let cams = synthetic::cameras();
        let pixels: Vec<_> = cams
            .iter()
            .map(|c| {
                let p = c.project(&x).unwrap();
                (p.u, p.v)
            })
            .collect();
        let problem = TriangulationProblem::from_pixels(cams, &pixels).unwrap();
        let eval = evaluate_residual(&problem, &x).unwrap();
        assert_eq!(eval.cost, 0.0);
        assert!(eval.residuals.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn construction_errors() {
        let singular = CameraMatrix::from_rows(
            "s",
            [[1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]],
        );
        assert!(matches!(singular, Err(Error::SingularCamera { .. })));
        let nan = CameraMatrix::from_rows(
            "n",
            [[f64::NAN, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]],
        );
        assert!(matches!(nan, Err(Error::NonFiniteCamera { .. })));
        let one = TriangulationProblem::from_pixels(vec![canonical()], &[(0.0, 0.0)]);
        assert!(matches!(one, Err(Error::TooFewViews(1))));
        let bad = TriangulationProblem::from_pixels(
            vec![canonical(), canonical()],
            &[(0.0, 0.0), (f64::INFINITY, 0.0)],
        );
        assert!(matches!(bad, Err(Error::NonFiniteObservation { index: 1 })));
    }
}
