use thiserror::Error;

use crate::tensor::Shape;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs} vs {rhs}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Shape,
        rhs: Shape,
    },

    #[error("tensor must have at least one row and one column, got {rows}x{cols}")]
    EmptyTensor { rows: usize, cols: usize },

    #[error("tensor data length {len} does not match shape {rows}x{cols}")]
    DataLength { rows: usize, cols: usize, len: usize },

    #[error("invalid model spec: {field}: {reason}")]
    InvalidSpec { field: String, reason: String },

    #[error("invalid monitor config: {field}: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("malformed CSV at row {row}: {reason}")]
    Csv { row: usize, reason: String },

    #[error("cannot map the correct-model verdict to a fix")]
    MapCorrectModel,

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
