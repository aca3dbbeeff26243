//! Core primitives for query-by-string scene text retrieval.
//!
//! The crate holds everything that does not need a neural network:
//!
//! - [`charset`]: symbol inventories and validated [`Word`]s.
//! - [`similarity`]: Levenshtein distance, normalized word similarity, target
//!   matrices and the tanh-cosine scoring of sequence features.
//! - [`augment`]: pseudoword generation by random character edits.
//! - [`phoc`]: pyramidal histogram of characters encoding and ranking.
//! - [`metrics`]: average precision and detection precision/recall/F.
//! - [`geometry`] and [`image`]: axis-aligned boxes and float RGB images.

pub mod augment;
pub mod charset;
pub mod error;
pub mod geometry;
pub mod image;
pub mod metrics;
pub mod phoc;
pub mod similarity;

pub use charset::{Charset, Word};
pub use error::{Error, Result};
pub use geometry::BBox;
pub use similarity::{SequenceFeature, SimilarityMatrix};
