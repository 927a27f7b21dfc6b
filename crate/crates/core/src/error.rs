//! Error types shared across the workspace.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, FsrError>;

/// Errors produced by tensor ops, file IO, and the training pipeline.
#[derive(Debug, thiserror::Error)]
pub enum FsrError {
    #[error("{op}: shape mismatch: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: {msg}")]
    InvalidArg { op: &'static str, msg: String },

    #[error("{op}: non-finite value encountered")]
    NonFinite { op: &'static str },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: u64, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error("cfl violation at step {step}: {msg}")]
    Cfl { step: usize, msg: String },

    #[error("training aborted at step {step}: {msg}")]
    Training { step: usize, msg: String },
}

impl FsrError {
    pub fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        FsrError::InvalidArg {
            op,
            msg: msg.into(),
        }
    }

    pub fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        FsrError::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
