//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty dataset or sample set: {0}")]
    Empty(&'static str),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("cell (y={y}, v={v}) has zero probability; overlap assumption violated")]
    ZeroCell { y: u8, v: u8 },

    #[error("pool cannot supply cell (y={y}, v={v}): needed {needed}, have {have}")]
    InsufficientCell {
        y: u8,
        v: u8,
        needed: usize,
        have: usize,
    },

    #[error("split with fraction {fraction} leaves an empty side for {n} examples")]
    DegenerateSplit { fraction: f64, n: usize },

    #[error("all weights in a group are zero")]
    AllZeroWeights,

    #[error("non-finite {what} at epoch {epoch}, step {step}")]
    NonFinite {
        what: &'static str,
        epoch: usize,
        step: usize,
    },

    #[error("fewer than 2 usable values for t-test (got {0})")]
    TooFewFolds(usize),

    #[error("metric precondition failed: {0}")]
    MetricPrecondition(String),

    #[error("all {0} bootstrap replicates failed the metric precondition")]
    AllReplicatesFailed(usize),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed dataset file: {0}")]
    MalformedData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
