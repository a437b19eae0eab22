//! Trust-region refinement with a Steihaug conjugate-gradient subproblem solver.
//!
//! The model predicts the reduction of `½f` as `−sᵀg − ½ sᵀBs`. Each inner iteration
//! compares it with the actual reduction `½(f(x) − f(x + s))`, accepts or rejects the
//! step and rescales the radius. `g` and `B` are refreshed after every accepted step.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::problem::ScenePoint;

/// Which curvature matrix the quadratic model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TrustRegionModel {
    #[default]
    GaussNewton,
    /// Full Hessian; diagnostic only.
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustRegionConfig {
    pub initial_radius: f64,
    pub eta_s: f64,
    pub eta_v: f64,
    pub gamma_inc: f64,
    pub gamma_red: f64,
    pub inner_eps: f64,
    pub max_inner: usize,
    pub model: TrustRegionModel,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        Self {
            initial_radius: 1.0,
            eta_s: 0.1,
            eta_v: 0.9,
            gamma_inc: 4.0,
            gamma_red: 0.25,
            inner_eps: 1e-8,
            max_inner: 100,
            model: TrustRegionModel::GaussNewton,
        }
    }
}

/// Cost and local quadratic model supplied by the caller.
pub trait LocalModel {
    /// `f(x)`, or `None` where undefined.
    fn cost(&self, x: &ScenePoint) -> Option<f64>;
    /// `(g, B)` at `x`.
    fn model(&self, x: &ScenePoint) -> Option<(Vector3<f64>, Matrix3<f64>)>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrustRegionOutcome {
    /// Accumulated accepted displacement from the starting point.
    pub step: Vector3<f64>,
    /// Cost at the starting point plus `step`.
    pub cost: f64,
    pub inner_iterations: usize,
    pub accepted: usize,
    /// Ratio of each inner iteration, in order.
    pub ratios: Vec<f64>,
    pub final_radius: f64,
}

/// Approximately minimizes `sᵀg + ½ sᵀBs` subject to `‖s‖ <= radius`.
pub fn steihaug(g: &Vector3<f64>, b: &Matrix3<f64>, radius: f64) -> Vector3<f64> {
    let mut z = Vector3::zeros();
    let mut r = *g;
    let g_norm = g.norm();
    if g_norm == 0.0 || radius <= 0.0 {
        return z;
    }
    let tol = 1e-12 * g_norm;
    let mut d = -r;
    for _ in 0..10 {
        let bd = b * d;
        let curvature = d.dot(&bd);
        if curvature <= 0.0 {
            return z + d * to_boundary(&z, &d, radius);
        }
        let rr = r.dot(&r);
        let alpha = rr / curvature;
        let next = z + d * alpha;
        if next.norm() >= radius {
            return z + d * to_boundary(&z, &d, radius);
        }
        z = next;
        r += bd * alpha;
        if r.norm() <= tol {
            break;
        }
        d = -r + d * (r.dot(&r) / rr);
    }
    z
}

/// Positive `τ` with `‖z + τd‖ = radius`.
fn to_boundary(z: &Vector3<f64>, d: &Vector3<f64>, radius: f64) -> f64 {
    let a = d.norm_squared();
    let b = 2.0 * z.dot(d);
    let c = z.norm_squared() - radius * radius;
    let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
    // Stable root: c <= 0, so the positive root is (−b + disc)/(2a) = −2c/(b + disc).
    if b >= 0.0 {
        -2.0 * c / (b + disc)
    } else {
        (-b + disc) / (2.0 * a)
    }
}

/// Runs the inner trust-region loop from `x` with initial model `(g, b)` and cost `cost`.
pub fn trust_region_step<M: LocalModel>(
    config: &TrustRegionConfig,
    g: &Vector3<f64>,
    b: &Matrix3<f64>,
    x: &ScenePoint,
    cost: f64,
    model: &M,
) -> TrustRegionOutcome {
    let start = *x;
    let mut x = *x;
    let mut f = cost;
    let mut g = *g;
    let mut b = *b;
    let mut radius = config.initial_radius;
    let mut accepted = 0;
    let mut ratios = Vec::new();
    let mut i = 0;
    while i < config.max_inner && g.norm() > config.inner_eps {
        let s = steihaug(&g, &b, radius);
        let predicted = -(s.dot(&g) + 0.5 * s.dot(&(b * s)));
        let trial = x + s;
        let f_trial = model.cost(&trial).unwrap_or(f64::INFINITY);
        let rho = if predicted > 0.0 {
            0.5 * (f - f_trial) / predicted
        } else {
            f64::NEG_INFINITY
        };
        ratios.push(rho);
        i += 1;
        if rho >= config.eta_s {
            if rho >= config.eta_v {
                radius *= config.gamma_inc;
            }
            x = trial;
            f = f_trial;
            accepted += 1;
            match model.model(&x) {
                Some((gn, bn)) => {
                    g = gn;
                    b = bn;
                }
                None => break,
            }
        } else {
            radius *= config.gamma_red;
            if radius <= f64::EPSILON * (1.0 + x.coords.norm()) {
                break;
            }
        }
    }
    TrustRegionOutcome {
        step: x - start,
        cost: f,
        inner_iterations: i,
        accepted,
        ratios,
        final_radius: radius,
    }
}
