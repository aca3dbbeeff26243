//! Training of the detection, similarity and recognition objectives.
//!
//! A step samples a batch, runs the detector, assigns its proposals to
//! ground truth (the ground-truth boxes are always added), builds the query
//! words of the batch together with their pseudowords and regresses the
//! predicted cosine similarities onto normalized edit-distance similarities.
//! [`Mode`] selects the ablations.

pub mod batch;
pub mod config;
mod error;
pub mod loss;
pub mod optim;
mod trainer;

pub use config::{Mode, OptimizerKind, RowReduce, TrainConfig};
pub use error::{Result, TrainError};
pub use trainer::{
    similarity_objective, train, StepReport, TrainOutcome, Trainer, TrainingSet, CHECKPOINT_FILE, METRICS_FILE,
};
