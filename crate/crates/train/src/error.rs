use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("loss term {term} is not finite ({value}) at iteration {iteration}")]
    NonFinite { term: &'static str, value: f64, iteration: usize },
    #[error("training diverged at iteration {iteration}: {reason}; state written to {dump}")]
    Diverged { iteration: usize, reason: String, dump: PathBuf },
    #[error("the dataset has no text instances to train on")]
    NoText,
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
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T> = std::result::Result<T, TrainError>;
