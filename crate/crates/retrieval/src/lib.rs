//! Query-by-string retrieval over an indexed image gallery.
//!
//! A [`GalleryIndex`] stores, per image, the detected proposals and one
//! feature per proposal. A query word is embedded once and an image scores
//! the best cosine similarity among its proposals. [`mean_ap`] evaluates a
//! query set against ground-truth transcripts and [`annotate`] places given
//! words on an image.

mod error;
mod index;
mod rank;
mod retriever;

use std::collections::BTreeMap;

pub use error::{Result, RetrievalError};
pub use index::{index_image, GalleryImage, GalleryIndex, IndexedImage};
pub use rank::{
    annotate, best_proposal, is_relevant, mean_ap, rank_gallery, retrieve, score_image, Annotation, ImageScore,
    MapReport, PreparedIndex, QueryAp, RankedImage, RetrievalResult, WordBox, EMPTY_SCORE,
};
pub use retriever::{QueryVector, Representation, Retriever};

use textseek_synth::GalleryManifest;

/// Gallery images of a dataset manifest (ids are the relative image paths)
/// and their ground-truth transcripts.
pub fn manifest_gallery(manifest: &GalleryManifest) -> (Vec<GalleryImage>, BTreeMap<String, Vec<String>>) {
    let images = manifest
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| GalleryImage {
            id: s.image.clone(),
            path: manifest.image_path(i),
        })
        .collect();
    let gt = manifest
        .samples
        .iter()
        .map(|s| (s.image.clone(), s.instances.iter().map(|i| i.text.clone()).collect()))
        .collect();
    (images, gt)
}
