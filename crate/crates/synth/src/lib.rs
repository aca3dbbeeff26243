//! Procedural scene-text images for training and evaluating retrieval
//! models without external datasets.
//!
//! Words are drawn with an embedded 5x7 bitmap font at fractional scales
//! with exact area anti-aliasing, over a flat-plus-ramp background with
//! pixel noise. Every drawn word comes with its tight box and transcript.

mod dataset;
mod error;
pub mod font;
mod lexicon;
mod render;

pub use dataset::{
    generate_dataset, load_image, save_image, AnnotatedInstance, AnnotatedSample, GalleryManifest, ANNOTATION_FILE,
};
pub use error::{Result, SynthError};
pub use lexicon::{builtin_lexicon, load_lexicon, save_lexicon, BUILTIN_WORDS};
pub use render::{
    coverage, ink_box, render_sample, render_words, Background, RenderTrace, SceneSample, SynthConfig, TextInstance,
};
