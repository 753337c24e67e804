use thiserror::Error;

#[derive(Debug, Error)]
pub enum GsrError {
    #[error("invalid particle parameter: {0}")]
    InvalidParameter(String),
    #[error("empty sample batch")]
    EmptyBatch,
    #[error("non-finite {what} at iteration {iteration}")]
    NonFinite { what: String, iteration: usize },
    /// The projection produced a non-finite loss; `field` is the state at
    /// the failing iteration.
    #[error("diverged at frame {frame}, iteration {iteration}: non-finite {what}")]
    Diverged {
        frame: u64,
        iteration: usize,
        what: String,
        field: Box<crate::gsr::GsrField>,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("unknown scene `{0}`")]
    UnknownScene(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("snapshot parse error at line {line}: {msg}")]
    Snapshot { line: usize, msg: String },
    #[error("mesh error: {0}")]
    Mesh(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = GsrError> = std::result::Result<T, E>;
