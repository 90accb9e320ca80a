use thiserror::Error;

/// Errors raised by state construction, model assembly and the statistics layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("observable touches mode {mode}, which is not carried by the state (modes {modes:?})")]
    ModeMismatch { mode: usize, modes: Vec<usize> },

    #[error("covariance matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("covariance matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("generator violates the solvable-class constraint: {0}")]
    GeneratorConstraint(String),

    #[error("propagated transform is not canonical: {0}")]
    NonCanonicalTransform(String),

    #[error("meters do not commute (commutator coefficient {coefficient:e})")]
    IncompatibleMeters { coefficient: f64 },

    #[error("observables {first} and {second} do not commute (commutator coefficient {coefficient:e})")]
    NonCommuting {
        first: usize,
        second: usize,
        coefficient: f64,
    },

    #[error("coupling time factor vanishes (F = {factor:e}); couplings are undefined")]
    DegenerateTimeFactor { factor: f64 },

    #[error("conditioned block is singular")]
    SingularConditioning,

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("model family {0} is not supported here")]
    UnsupportedFamily(String),

    #[error("outcome region has zero probability under the meter distribution")]
    ZeroMeasureRegion,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
