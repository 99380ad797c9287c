use thiserror::Error;

/// Errors produced by the factorization kernels, the cost model and the I/O layer.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("invalid pivot parameters: {0}")]
    InvalidParams(String),
    #[error("zero pivot value at column {0}")]
    ZeroPivot(usize),
    #[error("2x2 pivot at columns ({0}, {1}) failed the determinant guard")]
    DeterminantGuard(usize, usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("compressed matrix mode mismatch")]
    ModeMismatch,
    #[error("processor count {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("block count p = {0} must be even for the all-2x2 cost model")]
    OddBlockCount(usize),
    #[error("method {method} cannot run on this input: {reason}")]
    MethodMismatch { method: String, reason: String },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("non-symmetric entry at ({0}, {1})")]
    NonSymmetric(usize, usize),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
