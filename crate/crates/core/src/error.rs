use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = NastError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum NastError {
    /// A precondition of an operation was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("no alignment of length {frames} collapses to the {target_len}-token target")]
    Infeasible { target_len: usize, frames: usize },

    #[error("degenerate target: {0}")]
    DegenerateTarget(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("enumeration refused: {states} alignments exceeds the cap of {cap}")]
    StateSpaceTooLarge { states: f64, cap: usize },

    #[error("input of length {len} exceeds the maximum of {max} positions")]
    TooLong { len: usize, max: usize },

    #[error("session state: {0}")]
    SessionState(&'static str),

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("config: {0}")]
    Config(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl NastError {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        NastError::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NastError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Failures when reading a checkpoint file. Each corruption mode has its own variant.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint truncated while reading {0}")]
    Truncated(String),
    #[error("unknown tensor `{0}` in checkpoint")]
    UnknownTensor(String),
    #[error("tensor `{0}` missing from checkpoint")]
    MissingTensor(String),
    #[error("tensor `{name}` has shape {found:?}, model expects {expected:?}")]
    ShapeMismatch {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("embedded config is invalid: {0}")]
    BadConfig(String),
}
