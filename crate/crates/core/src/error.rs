use thiserror::Error;

/// Errors raised by the numerical side of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The point lies on (or numerically next to) a camera's principal plane.
    #[error("projective depth at camera {camera} is too close to zero ({depth:e})")]
    DepthNearZero { camera: usize, depth: f64 },

    #[error("camera {label:?} has a non-finite entry")]
    NonFiniteCamera { label: String },

    #[error("camera {label:?} has a singular left 3x3 block (det = {det:e})")]
    SingularCamera { label: String, det: f64 },

    #[error("observation {index} is not finite")]
    NonFiniteObservation { index: usize },

    #[error("a triangulation problem needs at least two views, got {0}")]
    TooFewViews(usize),

    #[error("got {cameras} cameras but {observations} observations")]
    ViewCountMismatch { cameras: usize, observations: usize },

    /// All back-projected rays are (numerically) parallel.
    #[error("viewing rays are parallel (condition number {condition:e})")]
    ParallelRays { condition: f64 },

    #[error("linear system is singular or too ill-conditioned")]
    SingularSystem,

    /// Newton system is not positive definite; callers usually fall back to Gauss-Newton.
    #[error("Hessian is not positive definite")]
    IndefiniteHessian,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
