//! Multi-view L2 triangulation.
//!
//! A scene point is recovered from `n >= 2` calibrated pinhole views by minimizing
//! the summed squared reprojection error. The pipeline is:
//!
//! 1. [`initializer`]: symmedian point of the back-projected rays (closed form);
//! 2. [`derivatives`]: exact Jacobian / Hessian from per-camera determinant tables;
//! 3. [`solver`]: Newton-Raphson, Gauss-Newton, Levenberg-Marquardt, or Gauss-Newton
//!    globalized by a backtracking line search or a trust region;
//! 4. [`verification`]: curvature solvability test, Kantorovich distance and the
//!    numerical L2 optimality verdict.
//!
//! [`dataset`], [`batch`] and [`report`] handle file ingestion and dataset-scale runs.

pub mod error;
pub mod problem;
pub mod derivatives;
pub mod finite_diff;
pub mod initializer;
pub mod linalg;
pub mod solver;
pub mod verification;
pub mod synthetic;
pub mod dataset;
pub mod batch;
pub mod report;

pub use error::{Error, Result};
pub use problem::{evaluate_residual, project, CameraMatrix, ImageObservation, ResidualEvaluation, ScenePoint, TriangulationProblem};
pub use solver::{solve, Method, SolveReport, SolveStatus, SolverConfig};
