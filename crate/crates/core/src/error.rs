use std::path::PathBuf;

use crate::sampling::SamplingError;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("dataset is empty")]
    Empty,
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("labels are not the contiguous range 1..={expected}: {found}")]
    LabelGap { expected: usize, found: String },
    #[error("label {0:?} does not appear in the label map")]
    UnknownLabel(String),
    #[error("column {0:?} not found in header")]
    MissingColumn(String),
    #[error("dimension mismatch: expected {expected} covariates, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("numeric failure while updating category {category}: {source}")]
    Numeric {
        category: usize,
        #[source]
        source: SamplingError,
    },
    #[error("dimension mismatch: model expects {expected} columns, query has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no retained posterior samples")]
    NoSamples,
}
