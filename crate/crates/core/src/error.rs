use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MtaError {
    #[error("row {row} has norm below 1e-12 and cannot be normalized")]
    ZeroVector { row: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("prediction reports disagree on the number of classes ({expected} vs {found})")]
    InconsistentClasses { expected: usize, found: usize },

    #[error("grid oracle requires 2-D embeddings and at most 8 views (got d = {dim}, N = {n_views})")]
    DimensionTooLarge { dim: usize, n_views: usize },
}

pub type Result<T, E = MtaError> = std::result::Result<T, E>;
