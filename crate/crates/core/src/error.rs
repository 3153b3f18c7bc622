use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("manifest row {row}: {message}")]
    Manifest { row: usize, message: String },

    #[error("split assignment: {0}")]
    Split(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("configuration invalid:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{path}: {message}", path = .path.display())]
    File { path: PathBuf, message: String },

    #[error("backend: {0}")]
    Backend(String),

    #[error("training aborted at epoch {epoch}, step {step}: {message}")]
    TrainingAborted {
        epoch: usize,
        step: usize,
        message: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("evaluation: {0}")]
    Evaluation(String),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    /// Process exit code for the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidInput(_) => 2,
            Error::Manifest { .. }
            | Error::Split(_)
            | Error::MissingFile(_)
            | Error::File { .. }
            | Error::Csv(_)
            | Error::Image(_) => 3,
            Error::TrainingAborted { .. } => 4,
            _ => 1,
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::File {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
