use thiserror::Error;

/// Errors surfaced by the numerical routines.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("basis index {index} out of range (basis has {len} functions)")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("kernel matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    NonSymmetricKernel { max_asymmetry: f64 },

    #[error("singular Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },

    #[error("sparse factorization failed: {0}")]
    Factorization(String),

    #[error("eigen decomposition failed: {0}")]
    Eigen(String),

    #[error("point ({x}, {y}) lies outside the mesh")]
    PointOutsideMesh { x: f64, y: f64 },

    #[error("element {element} has a non-positive Jacobian ({det:e})")]
    SingularElement { element: usize, det: f64 },

    #[error("conflicting Dirichlet values on dof {dof}: {first} vs {second}")]
    ConflictingConstraint { dof: usize, first: f64, second: f64 },

    #[error("not enough samples: need {needed}, have {have}")]
    NotEnoughSamples { needed: usize, have: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        name,
        reason: reason.into(),
    }
}
