use thiserror::Error;

/// Errors raised by the geometry, fitting and evaluation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point has non-positive depth z = {0}")]
    NonPositiveDepth(f64),
    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("need at least {required} vertices, mesh has {available}")]
    TooFewVertices { required: usize, available: usize },
    #[error("fragment {0} owns no vertices")]
    EmptyFragment(usize),
    #[error("fragment index {index} out of range (atlas has {count} fragments)")]
    BadFragmentIndex { index: usize, count: usize },
    #[error("projected mask is empty")]
    EmptyProjection,
    #[error("need at least {required} points, got {available}")]
    TooFewPoints { required: usize, available: usize },
    #[error("degenerate minimal sample")]
    DegenerateSample,
    #[error("solver found no valid solution")]
    NoSolution,
    #[error("points are nearly planar (eigenvalue ratio {0:e})")]
    NearPlanarConfiguration(f64),
    #[error("no pose hypothesis could be generated")]
    NoHypothesis,
    #[error("model has no vertices")]
    EmptyModel,
    #[error("invalid value: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
