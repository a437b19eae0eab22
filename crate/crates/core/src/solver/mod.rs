//! Iterative minimization of the reprojection cost from the symmedian point.
//!
//! Five methods are available: plain Newton-Raphson, plain Gauss-Newton,
//! Levenberg-Marquardt with `μ = ‖r‖^δ`, and Gauss-Newton globalized by either the
//! backtracking line search or the trust region. The globalized variants take the
//! plain Gauss-Newton step whenever it does not raise the cost above the reference
//! level (by default the cost at the starting point) and only engage globalization
//! otherwise.

pub mod line_search;
pub mod steps;
pub mod trust_region;

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::derivatives::{build_caches, linearize, CameraDerivativeCache, Linearization};
use crate::error::Error;
use crate::initializer;
use crate::problem::{ScenePoint, TriangulationProblem};
use crate::verification::{self, KANTOROVICH_THRESHOLD};

pub use line_search::{armijo_line_search, ArmijoRule, LineSearchConfig, LineSearchOutcome};
pub use steps::{gauss_newton_step, lm_damping, lm_step, newton_step};
pub use trust_region::{steihaug, trust_region_step, LocalModel, TrustRegionConfig, TrustRegionModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    NewtonRaphson,
    GaussNewton,
    LevenbergMarquardt,
    GnLineSearch,
    GnTrustRegion,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::NewtonRaphson,
        Method::GaussNewton,
        Method::LevenbergMarquardt,
        Method::GnLineSearch,
        Method::GnTrustRegion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::NewtonRaphson => "newton_raphson",
            Method::GaussNewton => "gauss_newton",
            Method::LevenbergMarquardt => "levenberg_marquardt",
            Method::GnLineSearch => "gn_line_search",
            Method::GnTrustRegion => "gn_trust_region",
        }
    }

    pub fn is_globalized(self) -> bool {
        matches!(self, Method::GnLineSearch | Method::GnTrustRegion)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .or(match key.as_str() {
                "nr" | "newton" => Some(Method::NewtonRaphson),
                "gn" => Some(Method::GaussNewton),
                "lm" => Some(Method::LevenbergMarquardt),
                "ggn" => Some(Method::GnLineSearch),
                _ => None,
            })
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|m| m.name()).collect();
                format!("unknown method {s:?}; expected one of {}", names.join(", "))
            })
    }
}

/// Level a plain Gauss-Newton step is compared against before globalization engages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HybridReference {
    /// `f(X₀)`, the cost at the starting point.
    #[default]
    Initial,
    /// `f(X_k)`: strictly monotone variant.
    Current,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    pub gradient_tol: f64,
    /// Relative step tolerance: stop once `‖step‖ <= step_tol · (1 + ‖X‖)`.
    pub step_tol: f64,
    pub max_iterations: usize,
    pub line_search: LineSearchConfig,
    pub trust_region: TrustRegionConfig,
    pub lm_delta_exponent: f64,
    pub hybrid_reference: HybridReference,
    /// Stop, keeping the current iterate, when a step raises the cost by a few ulps.
    /// Off means only the gradient, step and iteration limits apply.
    pub stop_at_noise_floor: bool,
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::GnLineSearch,
            gradient_tol: 1e-10,
            step_tol: 1e-14,
            max_iterations: 50,
            line_search: LineSearchConfig::default(),
            trust_region: TrustRegionConfig::default(),
            lm_delta_exponent: 1.5,
            hybrid_reference: HybridReference::Initial,
            stop_at_noise_floor: true,
            record_trace: true,
        }
    }
}

impl SolverConfig {
    pub fn with_method(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let ls = &self.line_search;
        let tr = &self.trust_region;
        if !(ls.gamma > 0.0 && ls.gamma < 0.5) {
            return Err(format!("line search gamma must lie in (0, 0.5), got {}", ls.gamma));
        }
        if !(ls.delta > 0.0 && ls.delta < 1.0) {
            return Err(format!("line search delta must lie in (0, 1), got {}", ls.delta));
        }
        if ls.max_backtracks == 0 {
            return Err("line search needs at least one trial".into());
        }
        if !(tr.eta_s < tr.eta_v) {
            return Err(format!("trust region needs eta_s < eta_v, got {} >= {}", tr.eta_s, tr.eta_v));
        }
        if !(tr.initial_radius > 0.0 && tr.gamma_inc > 1.0 && tr.gamma_red > 0.0 && tr.gamma_red < 1.0) {
            return Err("trust region radius parameters out of range".into());
        }
        if !(self.lm_delta_exponent > 1.0 && self.lm_delta_exponent < 2.0) {
            return Err(format!("LM exponent must lie in (1, 2), got {}", self.lm_delta_exponent));
        }
        if !(self.gradient_tol >= 0.0 && self.step_tol >= 0.0) {
            return Err("tolerances must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// The Kantorovich distance at the final iterate is at most 1.49e-8.
    Converged,
    /// Iterations, step size or the rounding floor ran out before convergence.
    MaxIterations,
    DegenerateGeometry,
    DepthDegenerate,
}

impl SolveStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterations => "max_iterations",
            SolveStatus::DegenerateGeometry => "degenerate_geometry",
            SolveStatus::DepthDegenerate => "depth_degenerate",
        }
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How an iteration's step was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    /// Starting point; no step.
    Initial,
    Newton,
    /// Newton-Raphson iteration that fell back to Gauss-Newton (Hessian not positive definite).
    NewtonFallback,
    GaussNewton,
    LevenbergMarquardt,
    LineSearch,
    LineSearchExhausted,
    TrustRegion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Cost at the iterate after this step.
    pub cost: f64,
    pub gradient_norm: f64,
    pub step_norm: f64,
    pub globalization_engaged: bool,
    pub kind: StepKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solution: ScenePoint,
    pub cost: f64,
    pub initial_point: ScenePoint,
    pub initial_cost: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    pub gradient_norm: f64,
    pub kantorovich_distance: f64,
    /// The rays were parallel and the initializer's fallback point was used.
    pub initializer_fallback: bool,
    pub trace: Option<Vec<TraceEntry>>,
}

struct Objective<'a> {
    problem: &'a TriangulationProblem,
    caches: &'a [CameraDerivativeCache],
    model: TrustRegionModel,
}

impl LocalModel for Objective<'_> {
    fn cost(&self, x: &ScenePoint) -> Option<f64> {
        self.problem.cost(x).ok().filter(|c| c.is_finite())
    }

    fn model(&self, x: &ScenePoint) -> Option<(Vector3<f64>, Matrix3<f64>)> {
        let newton = self.model == TrustRegionModel::Newton;
        let lin = linearize(self.problem, self.caches, x, newton).ok()?;
        Some((lin.gradient, lin.hessian.unwrap_or(lin.gauss_newton_matrix)))
    }
}

/// Triangulates `problem` from its symmedian point with the configured method.
pub fn solve(problem: &TriangulationProblem, config: &SolverConfig) -> SolveReport {
    let (initial_point, fallback) = match initializer::initialize(problem) {
        Ok(init) => (init.point, init.fallback),
        Err(_) => return failed(ScenePoint::origin(), SolveStatus::DegenerateGeometry, false),
    };
    solve_from(problem, config, initial_point, fallback)
}

/// Runs the configured iteration from an arbitrary starting point.
pub fn solve_from(
    problem: &TriangulationProblem,
    config: &SolverConfig,
    start: ScenePoint,
    initializer_fallback: bool,
) -> SolveReport {
    let caches = build_caches(problem);
    let objective = Objective {
        problem,
        caches: &caches,
        model: config.trust_region.model,
    };
    let need_hessian = config.method == Method::NewtonRaphson;

    let mut lin = match linearize(problem, &caches, &start, need_hessian) {
        Ok(lin) => lin,
        Err(_) => {
            let status = if initializer_fallback {
                SolveStatus::DegenerateGeometry
            } else {
                SolveStatus::DepthDegenerate
            };
            return failed(start, status, initializer_fallback);
        }
    };
    let initial_cost = lin.cost;
    let mut x = start;
    let mut trace = config.record_trace.then(|| {
        vec![TraceEntry {
            iteration: 0,
            cost: lin.cost,
            gradient_norm: lin.gradient.norm(),
            step_norm: 0.0,
            globalization_engaged: false,
            kind: StepKind::Initial,
        }]
    });

    let mut iterations = 0;
    let mut depth_failure = false;
    while iterations < config.max_iterations {
        // A small gradient alone is scale-dependent; stop once the Newton distance agrees.
        if lin.gradient.norm() <= config.gradient_tol && certified(problem, &caches, &x) {
            break;
        }
        let Some(step) = next_step(config, &objective, &x, &lin, initial_cost) else {
            break;
        };
        let candidate = x + step.displacement;
        let Ok(next) = linearize(problem, &caches, &candidate, need_hessian) else {
            depth_failure = true;
            break;
        };
        if config.stop_at_noise_floor && at_noise_floor(lin.cost, next.cost) {
            break;
        }
        iterations += 1;
        let step_norm = step.displacement.norm();
        x = candidate;
        lin = next;
        if let Some(trace) = trace.as_mut() {
            trace.push(TraceEntry {
                iteration: iterations,
                cost: lin.cost,
                gradient_norm: lin.gradient.norm(),
                step_norm,
                globalization_engaged: step.globalized,
                kind: step.kind,
            });
        }
        // Also catches globalization returning a zero step.
        if step_norm <= config.step_tol * (1.0 + x.coords.norm()) {
            break;
        }
    }

    let gradient_norm = lin.gradient.norm();
    let kantorovich_distance = verification::kantorovich_distance(problem, &caches, &x)
        .map(|k| k.value)
        .unwrap_or(f64::INFINITY);
    let status = if depth_failure && iterations == 0 {
        SolveStatus::DepthDegenerate
    } else if kantorovich_distance <= KANTOROVICH_THRESHOLD {
        SolveStatus::Converged
    } else {
        SolveStatus::MaxIterations
    };
    SolveReport {
        solution: x,
        cost: lin.cost,
        initial_point: start,
        initial_cost,
        iterations,
        status,
        gradient_norm,
        kantorovich_distance,
        initializer_fallback,
        trace,
    }
}

fn certified(problem: &TriangulationProblem, caches: &[CameraDerivativeCache], x: &ScenePoint) -> bool {
    verification::kantorovich_distance(problem, caches, x).is_ok_and(|k| k.value <= KANTOROVICH_THRESHOLD)
}

/// The candidate raised the cost by no more than a few ulps: residuals are accurate to
/// a few ulps of themselves, so the iteration has reached the rounding floor and the
/// current iterate is kept.
fn at_noise_floor(cost: f64, candidate: f64) -> bool {
    candidate > cost && candidate - cost <= NOISE_FLOOR_ULPS * f64::EPSILON * cost
}

const NOISE_FLOOR_ULPS: f64 = 4.0;

fn failed(point: ScenePoint, status: SolveStatus, initializer_fallback: bool) -> SolveReport {
    SolveReport {
        solution: point,
        cost: f64::NAN,
        initial_point: point,
        initial_cost: f64::NAN,
        iterations: 0,
        status,
        gradient_norm: f64::NAN,
        kantorovich_distance: f64::NAN,
        initializer_fallback,
        trace: None,
    }
}

struct Step {
    displacement: Vector3<f64>,
    kind: StepKind,
    globalized: bool,
}

/// Halves a raw step until the cost is defined at the trial point.
fn keep_defined(objective: &Objective<'_>, x: &ScenePoint, mut step: Vector3<f64>) -> Option<Vector3<f64>> {
    for _ in 0..60 {
        if objective.cost(&(x + step)).is_some() {
            return Some(step);
        }
        step *= 0.5;
    }
    None
}

fn next_step(
    config: &SolverConfig,
    objective: &Objective<'_>,
    x: &ScenePoint,
    lin: &Linearization,
    initial_cost: f64,
) -> Option<Step> {
    let g = &lin.gradient;
    let jtj = &lin.gauss_newton_matrix;
    let plain = |displacement, kind| {
        keep_defined(objective, x, displacement).map(|displacement| Step {
            displacement,
            kind,
            globalized: false,
        })
    };
    match config.method {
        Method::NewtonRaphson => {
            let h = lin.hessian.as_ref().expect("Newton-Raphson linearizes with the Hessian");
            match newton_step(g, h) {
                Ok(d) => plain(d, StepKind::Newton),
                Err(Error::IndefiniteHessian) => {
                    plain(gauss_newton_step(g, jtj).ok()?, StepKind::NewtonFallback)
                }
                Err(_) => None,
            }
        }
        Method::GaussNewton => plain(gauss_newton_step(g, jtj).ok()?, StepKind::GaussNewton),
        Method::LevenbergMarquardt => {
            let mu = lm_damping(lin.cost.sqrt(), config.lm_delta_exponent);
            plain(lm_step(g, jtj, mu).ok()?, StepKind::LevenbergMarquardt)
        }
        Method::GnLineSearch | Method::GnTrustRegion => {
            let s = gauss_newton_step(g, jtj).ok()?;
            let reference = match config.hybrid_reference {
                HybridReference::Initial => initial_cost,
                HybridReference::Current => lin.cost,
            };
            if let Some(f_trial) = objective.cost(&(x + s)) {
                if f_trial <= reference {
                    return Some(Step {
                        displacement: s,
                        kind: StepKind::GaussNewton,
                        globalized: false,
                    });
                }
            }
            if config.method == Method::GnLineSearch {
                let out = armijo_line_search(&config.line_search, lin.cost, s.norm(), 2.0 * g.dot(&s), |a| {
                    objective.cost(&(x + s * a))
                });
                let kind = if out.exhausted {
                    StepKind::LineSearchExhausted
                } else {
                    StepKind::LineSearch
                };
                let displacement = if out.cost.is_finite() {
                    s * out.alpha
                } else {
                    Vector3::zeros()
                };
                Some(Step {
                    displacement,
                    kind,
                    globalized: true,
                })
            } else {
                let b = match config.trust_region.model {
                    TrustRegionModel::GaussNewton => *jtj,
                    TrustRegionModel::Newton => objective.model(x)?.1,
                };
                let out = trust_region_step(&config.trust_region, g, &b, x, lin.cost, objective);
                Some(Step {
                    displacement: out.step,
                    kind: StepKind::TrustRegion,
                    globalized: true,
                })
            }
        }
    }
}
