//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("task {task} has no samples")]
    EmptyTask { task: usize },
    #[error("group {group:?} has no samples")]
    EmptyGroup { group: String },
    #[error("rate undefined: group {group:?} has no samples with label {label}")]
    UndefinedRate { group: String, label: u8 },
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("negative loss {value} for task {task}")]
    NegativeLoss { task: usize, value: f64 },
    #[error("non-finite loss for task {task} at epoch {epoch}")]
    Divergence { epoch: usize, task: usize },
    #[error("mixed-group batch: expected task {expected}, found sample with group {found}")]
    MixedGroupBatch { expected: usize, found: usize },
    #[error("stratum (group {group}, label {label}) has {count} samples, need at least {needed}")]
    StratumTooSmall {
        group: usize,
        label: u8,
        count: usize,
        needed: usize,
    },
    #[error("csv error in {path}: {detail}")]
    Csv { path: String, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
