use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty signal")]
    EmptySignal,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("non-real self-conjugate bin {0}")]
    NonRealSelfConjugate(usize),
    #[error("broken Hermitian pairing at bin ({row}, {col})")]
    HermitianPairing { row: usize, col: usize },
    #[error("coordinate length mismatch: expected {expected}, got {got}")]
    CoordinateLength { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("index {index} out of range for length {len}")]
    OutOfRange { index: usize, len: usize },
    #[error("KL overflow")]
    KlOverflow,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("unregistered op `{0}`")]
    UnregisteredOp(String),
    #[error("backward root must be a scalar, got length {0}")]
    NonScalarRoot(usize),
    #[error("empty batch")]
    EmptyBatch,
    #[error("training diverged at step {step}: non-finite ELBO")]
    Diverged { step: usize, trace: alloc::vec::Vec<f64> },
    #[error("unclassified layer `{0}`")]
    UnclassifiedLayer(String),
}

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
