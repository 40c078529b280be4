use alloc::boxed::Box;

/// Errors raised by geometry, training and sampling routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cannot project a zero vector onto the sphere")]
    ZeroVector,
    #[error("tangent vector is attached to a different base point")]
    BaseMismatch,
    #[error("antipodal points: the logarithm is undefined on the cut locus")]
    AntipodalPoints,
    #[error("point does not lie on the manifold")]
    NotOnManifold,
    #[error("vector does not lie in the tangent space")]
    NotTangent,
    #[error("invalid manifold: {0}")]
    InvalidManifold(&'static str),
    #[error("operation not supported on this manifold: {0}")]
    UnsupportedManifold(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("empty input")]
    EmptyInput,
    #[error("points are not contained in an open hemisphere; the Frechet mean is not unique")]
    NoUniqueMean,
    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("time {t} too close to 1")]
    TimeSingularity { t: f64 },
    #[error("integrator state became non-finite at step {step}")]
    NonFiniteState { step: usize },
    #[error("{failed} of {total} samples failed to integrate")]
    TooManyFailures { failed: usize, total: usize },
    #[error("epoch {epoch}: {source}")]
    AtEpoch { epoch: usize, source: Box<Error> },
}

impl Error {
    /// Short machine-readable category, stable across versions.
    pub fn category(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::ZeroVector => "zero-vector",
            Error::BaseMismatch => "base-mismatch",
            Error::AntipodalPoints => "antipodal-points",
            Error::NotOnManifold => "not-on-manifold",
            Error::NotTangent => "not-tangent",
            Error::InvalidManifold(_) => "invalid-manifold",
            Error::UnsupportedManifold(_) => "unsupported-manifold",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::EmptyInput => "empty-input",
            Error::NoUniqueMean => "no-unique-mean",
            Error::NoConvergence { .. } => "no-convergence",
            Error::NonFiniteLoss => "non-finite-loss",
            Error::TimeSingularity { .. } => "time-singularity",
            Error::NonFiniteState { .. } => "non-finite-state",
            Error::TooManyFailures { .. } => "too-many-failures",
            Error::AtEpoch { source, .. } => source.category(),
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
