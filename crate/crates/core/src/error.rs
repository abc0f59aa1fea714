use thiserror::Error;

/// Errors produced by index construction, oracles and file handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input point set is empty")]
    EmptyInput,

    #[error("invalid net radii: inner radius {inner} must be positive and at most outer radius {outer}")]
    InvalidRadii { outer: f64, inner: f64 },

    #[error("epsilon {eps} outside the allowed range ({lo}, {hi}]")]
    InvalidEpsilon { eps: f64, lo: f64, hi: f64 },

    #[error("separation {0} must be at least 1")]
    InvalidSeparation(f64),

    #[error("reach map covers {got} points but the tree stores {expected}")]
    PartialReach { expected: usize, got: usize },

    #[error("reach value for point {0} is not a finite nonnegative number")]
    InvalidReach(usize),

    #[error("operation requires an affine subspace oracle")]
    NotAffine,

    #[error("wspd pair ({a}, {b}) has zero extent; two data points embed to the same location")]
    DegeneratePair { a: usize, b: usize },

    #[error("net would contain more than {limit} points")]
    NetTooLarge { limit: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid subspace: {0}")]
    InvalidSubspace(String),

    #[error("invalid instance spec: {0}")]
    InvalidSpec(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_eps(eps: f64, lo: f64, hi: f64) -> Result<()> {
    if eps.is_finite() && eps > lo && eps <= hi {
        Ok(())
    } else {
        Err(Error::InvalidEpsilon { eps, lo, hi })
    }
}

pub(crate) fn check_radii(outer: f64, inner: f64) -> Result<()> {
    if inner.is_finite() && outer.is_finite() && inner > 0.0 && outer >= inner {
        Ok(())
    } else {
        Err(Error::InvalidRadii { outer, inner })
    }
}
