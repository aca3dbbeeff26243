#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
    #[error(transparent)]
    Core(#[from] textseek_core::Error),
    #[error(transparent)]
    Model(#[from] textseek_model::ModelError),
    #[error(transparent)]
    Synth(#[from] textseek_synth::SynthError),
    #[error(transparent)]
    Train(#[from] textseek_train::TrainError),
    #[error(transparent)]
    Retrieval(#[from] textseek_retrieval::RetrievalError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit code: 1 for usage errors, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
