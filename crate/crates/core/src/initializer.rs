//! Symmedian-point triangulation.
//!
//! Each view is factored into a viewing ray `⟨S, W⟩` (camera centre and unit
//! back-projected direction). The symmedian point is the minimizer of the summed
//! squared point-to-ray distances `Σ ‖(I − W Wᵀ)(X − S)‖²`, i.e. the solution of
//! `(Σ Pᵢ) X = Σ Pᵢ Sᵢ` with `Pᵢ = I − Wᵢ Wᵢᵀ`.

use nalgebra::{Matrix3, Point3, Unit, Vector3};

use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::{CameraMatrix, ImageObservation, ScenePoint, TriangulationProblem, SINGULAR_CAMERA_TOL};

/// Condition number of `Σ Pᵢ` above which the rays are declared parallel.
pub const PARALLEL_RAYS_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub anchor: Point3<f64>,
    pub direction: Unit<Vector3<f64>>,
}

impl Ray {
    pub fn new(anchor: Point3<f64>, direction: Vector3<f64>) -> Self {
        Self {
            anchor,
            direction: Unit::new_normalize(direction),
        }
    }

    pub fn at(&self, t: f64) -> Point3<f64> {
        self.anchor + self.direction.into_inner() * t
    }

    /// Squared perpendicular distance from `point` to the line.
    pub fn distance_squared(&self, point: &Point3<f64>) -> f64 {
        (ray_projection(self) * (point - self.anchor)).norm_squared()
    }
}

/// Camera centre `S = −M⁻¹ p₄` and viewing direction `W ∝ M⁻¹ (u, v, 1)ᵀ`, oriented so
/// that `S + W` has positive projective depth.
pub fn factor_camera(camera: &CameraMatrix, obs: &ImageObservation) -> Result<Ray> {
    let m = camera.left_block();
    let det = m.determinant();
    if det.abs() <= SINGULAR_CAMERA_TOL * m.norm().powi(3) {
        return Err(Error::SingularCamera {
            label: camera.label().to_string(),
            det,
        });
    }
    let lu = m.lu();
    let (Some(centre), Some(back)) = (
        lu.solve(&(-camera.translation_column())),
        lu.solve(&Vector3::new(obs.u, obs.v, 1.0)),
    ) else {
        return Err(Error::SingularCamera {
            label: camera.label().to_string(),
            det,
        });
    };
    let anchor = Point3::from(centre);
    let mut ray = Ray::new(anchor, back);
    if camera.depth(&ray.at(1.0)) < 0.0 {
        ray.direction = -ray.direction;
    }
    Ok(ray)
}

/// `I − W Wᵀ`, the orthogonal projector onto the plane normal to the ray.
pub fn ray_projection(ray: &Ray) -> Matrix3<f64> {
    let w = ray.direction.into_inner();
    Matrix3::identity() - w * w.transpose()
}

/// Least-squares intersection of the rays.
pub fn symmedian_point(rays: &[Ray]) -> Result<ScenePoint> {
    if rays.len() < 2 {
        return Err(Error::TooFewViews(rays.len()));
    }
    let mut lhs = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for ray in rays {
        let p = ray_projection(ray);
        lhs += p;
        rhs += p * ray.anchor.coords;
    }
    let condition = linalg::symmetric_condition(&lhs);
    if !(condition <= PARALLEL_RAYS_CONDITION) {
        return Err(Error::ParallelRays { condition });
    }
    linalg::solve_symmetric(&lhs, &rhs)
        .map(Point3::from)
        .ok_or(Error::ParallelRays { condition })
}

/// Outcome of initializing a problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Initialization {
    pub point: ScenePoint,
    pub rays: Vec<Ray>,
    /// Set when the rays were parallel and the anchor-midpoint fallback was used.
    pub fallback: bool,
}

/// Symmedian point of the problem's viewing rays. When the rays are parallel, the
/// midpoint of the two closest camera centres is returned with `fallback` set.
pub fn initialize(problem: &TriangulationProblem) -> Result<Initialization> {
    let rays = problem
        .views()
        .map(|(c, o)| factor_camera(c, o))
        .collect::<Result<Vec<_>>>()?;
    match symmedian_point(&rays) {
        Ok(point) => Ok(Initialization {
            point,
            rays,
            fallback: false,
        }),
        Err(Error::ParallelRays { .. }) => {
            let point = closest_anchor_midpoint(&rays);
            Ok(Initialization {
                point,
                rays,
                fallback: true,
            })
        }
        Err(e) => Err(e),
    }
}

fn closest_anchor_midpoint(rays: &[Ray]) -> ScenePoint {
    let mut best = (f64::INFINITY, 0, 1);
    for i in 0..rays.len() {
        for j in i + 1..rays.len() {
            let d = (rays[i].anchor - rays[j].anchor).norm_squared();
            if d < best.0 {
                best = (d, i, j);
            }
        }
    }
    nalgebra::center(&rays[best.1].anchor, &rays[best.2].anchor)
}
