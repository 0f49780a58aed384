//! Crate-wide error type.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: axis {axis} out of range for rank {rank}")]
    InvalidAxis {
        op: &'static str,
        axis: usize,
        rank: usize,
    },

    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    #[error("log of non-positive input (min element {min})")]
    LogDomain { min: f64 },

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("backward already ran on this tensor; re-run the forward pass first")]
    BackwardAlreadyRun,

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: usize, vocab_size: usize },

    #[error("code capacity exceeded: K^M = {capacity} < vocabulary size {vocab_size}")]
    CodeCapacity { capacity: u128, vocab_size: usize },

    #[error("discrete code component {component} out of range for K = {k}")]
    CodeComponentOutOfRange { component: usize, k: usize },

    #[error("routing: all capsules are masked out")]
    AllCapsulesMasked,

    #[error("{context}: non-finite value encountered")]
    NonFinite { context: String },

    #[error("empty input sequence")]
    EmptyInput,

    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    #[error("checkpoint mismatch in section {section}: {msg}")]
    CheckpointMismatch { section: String, msg: String },

    #[error("csv parse error at line {line}: {msg}")]
    CsvParse { line: u64, msg: String },

    #[error("record label {label} invalid: {msg}")]
    BadLabel { label: i64, msg: String },

    #[error("empty corpus: cannot build a vocabulary")]
    EmptyCorpus,

    #[error("class count mismatch: checkpoint has {expected}, data has {actual}")]
    ClassCountMismatch { expected: usize, actual: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
