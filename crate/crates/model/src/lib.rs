//! The retrieval network: a small residual backbone with a two-level
//! pyramid, an anchor-free text detector, RoI-Align pooling, sequence
//! modules for image regions and query words, and CTC / PHOC heads.
//!
//! [`network`] builds differentiable graphs for training; [`Model`] wraps
//! the same code for inference over fixed parameters.

mod config;
mod error;
pub mod fcos;
mod model;
pub mod network;
mod params;

pub use config::ModelConfig;
pub use error::{ModelError, Result};
pub use fcos::ProposalSet;
pub use model::{crop_features, crops_to_tensor, Model};
pub use params::{meta, Binding, Checkpoint, ParameterStore};
