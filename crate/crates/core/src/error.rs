use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse grouping used by the CLI and the C ABI to pick exit/status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Io,
    Numerical,
    EmptySpecification,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("normal equations are singular (ridge = 0 and design matrix is rank-deficient)")]
    SingularSystem,

    #[error("reference axis has (near) zero norm")]
    ZeroReferenceAxis,

    #[error("axis for attribute {0} lies in the span of previously accepted axes")]
    AxisCollinear(usize),

    #[error("vector has (near) zero norm")]
    ZeroVector,

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("value {value} at index {index} outside [0, 1]")]
    OutOfUnitRange { index: usize, value: f64 },

    #[error("order is not a permutation of 0..{0}")]
    InvalidPermutation(usize),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid lexicon: {0}")]
    InvalidLexicon(String),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("unknown attribute name `{0}`")]
    UnknownAttributeName(String),

    #[error("line {line}: bad label value `{value}` (expected -1 or 1)")]
    BadLabelValue { line: usize, value: String },

    #[error("record count mismatch: header declares {declared}, found {actual}")]
    CountMismatch { declared: usize, actual: usize },

    #[error("batch is empty")]
    EmptyBatch,

    #[error("target has no specified attributes")]
    NoSpecifiedAttributes,

    #[error("trace has no oracle measurements")]
    MissingOracleData,

    #[error("bad TTFX container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::TooFewSamples { .. }
            | Error::SingularSystem
            | Error::ZeroReferenceAxis
            | Error::AxisCollinear(_)
            | Error::ZeroVector
            | Error::NonFinite(_) => ErrorClass::Numerical,
            Error::NoSpecifiedAttributes => ErrorClass::EmptySpecification,
            Error::Io(_) | Error::Format(_) => ErrorClass::Io,
            _ => ErrorClass::Validation,
        }
    }
}
