//! Random scene generators shared by the integration suites.
#![allow(dead_code)]

use nalgebra::{Matrix3, Matrix3x4, Rotation3, Unit, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use triangulation::{CameraMatrix, ScenePoint, TriangulationProblem};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_vector(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// A camera at distance 3..6 from the origin looking roughly at it, with a mildly
/// skewed calibration. The left 3x3 block has condition number well below 1e4.
pub fn random_camera(rng: &mut impl Rng, label: &str) -> CameraMatrix {
    let centre = unit_vector(rng) * rng.gen_range(3.0..6.0);
    let aim = -centre.normalize() + unit_vector(rng) * 0.1;
    let z = aim.normalize();
    let helper = if z.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let x = helper.cross(&z).normalize();
    let y = z.cross(&x);
    let roll = Rotation3::from_axis_angle(&Unit::new_normalize(z), rng.gen_range(0.0..std::f64::consts::TAU));
    let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]) * roll.matrix().transpose();
    let f = rng.gen_range(0.8..1.5);
    let k = Matrix3::new(
        f,
        rng.gen_range(-0.05..0.05),
        rng.gen_range(-0.1..0.1),
        0.0,
        f * rng.gen_range(0.9..1.1),
        rng.gen_range(-0.1..0.1),
        0.0,
        0.0,
        1.0,
    );
    let mut p = Matrix3x4::zeros();
    p.fixed_view_mut::<3, 3>(0, 0).copy_from(&(k * r));
    p.set_column(3, &(-(k * r) * centre));
    // Random overall scale and sign: the problem is invariant to both.
    let s = rng.gen_range(0.5..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    CameraMatrix::new(label, p * s).expect("well-conditioned camera")
}

pub fn random_point(rng: &mut impl Rng) -> ScenePoint {
    ScenePoint::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))
}

pub fn random_cameras(rng: &mut impl Rng, n: usize) -> Vec<CameraMatrix> {
    (0..n).map(|i| random_camera(rng, &format!("c{i}"))).collect()
}

/// Projections of `point`, plus independent uniform noise of half-width `noise` on
/// each coordinate.
pub fn observe(rng: &mut impl Rng, cameras: &[CameraMatrix], point: &ScenePoint, noise: f64) -> Vec<(f64, f64)> {
    cameras
        .iter()
        .map(|c| {
            let p = c.project(point).expect("point in front");
            if noise > 0.0 {
                (p.u + rng.gen_range(-noise..noise), p.v + rng.gen_range(-noise..noise))
            } else {
                (p.u, p.v)
            }
        })
        .collect()
}

pub struct Scene {
    pub problem: TriangulationProblem,
    pub truth: ScenePoint,
}

pub fn random_scene(rng: &mut impl Rng, n: usize, noise: f64) -> Scene {
    let cameras = random_cameras(rng, n);
    let truth = random_point(rng);
    let pixels = observe(rng, &cameras, &truth, noise);
    Scene {
        problem: TriangulationProblem::from_pixels(cameras, &pixels).expect("valid problem"),
        truth,
    }
}

/// A local minimum found by the multistart oracle.
pub struct Minimum {
    pub point: ScenePoint,
    pub cost: f64,
}

/// Newton-Raphson from `starts` random points in a box of half-width `radius` around
/// `centre`. Returns the distinct local minima (positive definite Hessian, Newton
/// distance below 1e-10), cheapest first.
pub fn multistart(
    rng: &mut impl Rng,
    problem: &TriangulationProblem,
    centre: &ScenePoint,
    radius: f64,
    starts: usize,
) -> Vec<Minimum> {
    use triangulation::derivatives::{build_caches, linearize};
    use triangulation::solver::solve_from;
    use triangulation::{Method, SolveStatus, SolverConfig};

    let config = SolverConfig {
        max_iterations: 100,
        record_trace: false,
        ..SolverConfig::with_method(Method::NewtonRaphson)
    };
    let caches = build_caches(problem);
    let mut minima: Vec<Minimum> = Vec::new();
    for _ in 0..starts {
        let offset = Vector3::new(
            rng.gen_range(-radius..radius),
            rng.gen_range(-radius..radius),
            rng.gen_range(-radius..radius),
        );
        let report = solve_from(problem, &config, centre + offset, false);
        if report.status != SolveStatus::Converged || report.kantorovich_distance > 1e-10 {
            continue;
        }
        let Ok(lin) = linearize(problem, &caches, &report.solution, true) else {
            continue;
        };
        let eig = lin.hessian.unwrap().symmetric_eigenvalues();
        if eig.min() <= 0.0 {
            continue;
        }
        let scale = 1.0 + report.solution.coords.norm();
        if minima.iter().all(|m| (m.point - report.solution).norm() > 1e-6 * scale) {
            minima.push(Minimum {
                point: report.solution,
                cost: report.cost,
            });
        }
    }
    minima.sort_by(|a, b| a.cost.total_cmp(&b.cost));
    minima
}
