use thiserror::Error;

/// Errors raised by the geometry, dynamics and filtering layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not skew-symmetric (|A + A^T| = {asymmetry:e})")]
    NotSkewSymmetric { asymmetry: f64 },

    #[error("rotation angle {angle} rad is too close to pi; the logarithm axis is ambiguous")]
    AngleNearPi { angle: f64 },

    #[error("matrix is not a rotation: {reason}")]
    NotARotation { reason: String },

    #[error("singular matrix")]
    Singular,

    #[error("implicit attitude solve did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix has zero trace")]
    ZeroTrace,

    #[error("matrix is not symmetric positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("no certified ellipsoid cover in the search family")]
    CoverSearchExhausted,

    #[error("empty intersection under the bounded-error model (beta = {beta:e})")]
    EmptyIntersection { beta: f64 },

    #[error("degenerate measurement geometry: |b x e| = {cross_norm:e}")]
    DegenerateGeometry { cross_norm: f64 },

    #[error("vector is not unit length (norm {norm})")]
    NotUnit { norm: f64 },

    #[error("measurement noise rotation too large (|nu| = {norm})")]
    NoiseTooLarge { norm: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
