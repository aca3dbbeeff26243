use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("checkpoint {0}")]
    Checkpoint(String),
    #[error("index {path}: {reason}")]
    Index { path: PathBuf, reason: String },
    #[error(transparent)]
    Core(#[from] textseek_core::Error),
    #[error(transparent)]
    Model(#[from] textseek_model::ModelError),
    #[error(transparent)]
    Synth(#[from] textseek_synth::SynthError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, RetrievalError>;
