//! Error type shared by the numeric and data modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("layer {layer}: input width {actual} does not match expected {expected}")]
    LayerShape {
        layer: usize,
        expected: usize,
        actual: usize,
    },

    #[error("backward cache does not match model or output gradient: {0}")]
    StaleCache(String),

    #[error("label must be exactly 0 or 1, found {0}")]
    InvalidLabel(f64),

    #[error("non-finite value produced in {0}")]
    NonFinite(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("training aborted at epoch {epoch}, batch {batch}: loss is not finite ({loss})")]
    DivergedLoss {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("column {0:?} missing from CSV header")]
    MissingColumn(String),

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("row {row}, column {column:?}: cannot parse {value:?} as a number")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("dataset has {0} rows; at least 5 are required to partition")]
    PartitionTooSmall(usize),

    #[error("vertical split invalid: {0}")]
    InvalidSplit(String),

    #[error("unknown id {0:?}")]
    UnknownId(String),

    #[error("model file corrupt or unsupported: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
