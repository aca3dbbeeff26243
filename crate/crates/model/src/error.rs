use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Core(#[from] textseek_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not a valid checkpoint: {reason}")]
    Checkpoint { path: PathBuf, reason: String },
}

impl From<textseek_tensor::TensorError> for ModelError {
    fn from(e: textseek_tensor::TensorError) -> Self {
        ModelError::Degenerate(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, ModelError>;
