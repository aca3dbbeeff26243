//! Precomputed proposals and features of a gallery, and their file format.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use textseek_core::image::Image;
use textseek_core::{BBox, SequenceFeature};
use textseek_model::ProposalSet;

use crate::error::{Result, RetrievalError};
use crate::retriever::{embed, Representation, Retriever};

const MAGIC: &[u8; 6] = b"TSINDX";
const VERSION: u32 = 1;

/// One gallery image: its proposals in original pixel coordinates and one
/// feature per proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexedImage {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub proposals: ProposalSet,
    pub features: SequenceFeature,
}

/// Everything needed to rank a gallery without touching its images again.
#[derive(Debug, Clone, PartialEq)]
pub struct GalleryIndex {
    /// Fingerprint of the checkpoint that produced the features.
    pub fingerprint: String,
    /// Charset in its text form, as stored in the checkpoint.
    pub charset: String,
    pub fold_case: bool,
    pub representation: Representation,
    /// Long-side lengths the images were run at; 0 stands for the native size.
    pub scales: Vec<usize>,
    pub steps: usize,
    pub channels: usize,
    pub images: Vec<IndexedImage>,
    /// Images that could not be indexed, with the reason.
    pub warnings: Vec<String>,
}

/// A gallery image to index, by id and path.
#[derive(Debug, Clone, PartialEq)]
pub struct GalleryImage {
    pub id: String,
    pub path: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct ImageHeader {
    id: String,
    width: usize,
    height: usize,
    boxes: Vec<BBox>,
    scores: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    fingerprint: String,
    charset: String,
    fold_case: bool,
    representation: Representation,
    scales: Vec<usize>,
    steps: usize,
    channels: usize,
    warnings: Vec<String>,
    images: Vec<ImageHeader>,
}

/// Runs the model at every scale and pools the proposals, mapped back to
/// the original image size, into one set.
pub fn index_image(retriever: &Retriever, id: &str, image: &Image, scales: &[usize]) -> Result<IndexedImage> {
    let (steps, channels) = retriever.feature_shape();
    let mut proposals = ProposalSet::default();
    let mut features = SequenceFeature::empty(steps, channels)?;
    for &s in scales {
        let resized;
        let input = if s == 0 || s == image.width().max(image.height()) {
            image
        } else {
            resized = image.resize_long_side(s);
            &resized
        };
        let (p, f) = retriever.encode_image(input)?;
        let sx = image.width() as f64 / input.width() as f64;
        let sy = image.height() as f64 / input.height() as f64;
        proposals.boxes.extend(
            p.boxes
                .iter()
                .map(|b| b.scale(sx, sy).clamp_to(image.width() as f64, image.height() as f64)),
        );
        proposals.scores.extend(p.scores);
        features.extend(&f)?;
    }
    Ok(IndexedImage {
        id: id.to_string(),
        width: image.width(),
        height: image.height(),
        proposals,
        features,
    })
}

fn check_scales(scales: &[usize]) -> Result<()> {
    if scales.is_empty() {
        return Err(RetrievalError::InvalidInput("at least one scale is needed".into()));
    }
    if let Some(s) = scales.iter().find(|&&s| s != 0 && s < 8) {
        return Err(RetrievalError::InvalidInput(format!("scale {s} is below 8 pixels")));
    }
    Ok(())
}

impl GalleryIndex {
    fn empty(retriever: &Retriever, scales: &[usize]) -> Self {
        let (steps, channels) = retriever.feature_shape();
        GalleryIndex {
            fingerprint: retriever.fingerprint().to_string(),
            charset: retriever.charset().to_text(),
            fold_case: retriever.charset().folds_case(),
            representation: retriever.representation(),
            scales: scales.to_vec(),
            steps,
            channels,
            images: Vec::new(),
            warnings: Vec::new(),
        }
    }

    /// Indexes images already in memory.
    pub fn from_images(retriever: &Retriever, images: &[(String, Image)], scales: &[usize]) -> Result<Self> {
        check_scales(scales)?;
        let mut index = GalleryIndex::empty(retriever, scales);
        for (id, img) in images {
            index.images.push(index_image(retriever, id, img, scales)?);
        }
        Ok(index)
    }

    /// Reads and indexes images from disk. Unreadable or unusable images are
    /// left out and noted in [`GalleryIndex::warnings`].
    pub fn build(retriever: &Retriever, images: &[GalleryImage], scales: &[usize]) -> Result<Self> {
        check_scales(scales)?;
        if images.is_empty() {
            return Err(RetrievalError::InvalidInput("the gallery is empty".into()));
        }
        let mut index = GalleryIndex::empty(retriever, scales);
        for g in images {
            let entry = textseek_synth::load_image(&g.path)
                .map_err(RetrievalError::from)
                .and_then(|img| index_image(retriever, &g.id, &img, scales));
            match entry {
                Ok(e) => index.images.push(e),
                Err(e) => {
                    log::warn!("skipping {}: {e}", g.id);
                    index.warnings.push(format!("{}: {e}", g.id));
                }
            }
        }
        Ok(index)
    }

    /// Whether this index was produced by `retriever`'s checkpoint.
    pub fn matches(&self, retriever: &Retriever) -> bool {
        self.fingerprint == retriever.fingerprint()
    }

    /// Unit vectors of the proposals of image `i`; `None` for features that
    /// are zero after squashing.
    pub fn proposal_vectors(&self, i: usize) -> Vec<Option<Vec<f64>>> {
        embed(&self.images[i].features, self.representation)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            fingerprint: self.fingerprint.clone(),
            charset: self.charset.clone(),
            fold_case: self.fold_case,
            representation: self.representation,
            scales: self.scales.clone(),
            steps: self.steps,
            channels: self.channels,
            warnings: self.warnings.clone(),
            images: self
                .images
                .iter()
                .map(|e| ImageHeader {
                    id: e.id.clone(),
                    width: e.width,
                    height: e.height,
                    boxes: e.proposals.boxes.clone(),
                    scores: e.proposals.scores.clone(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("index header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.write_u32::<LittleEndian>(VERSION).unwrap();
        out.write_u64::<LittleEndian>(json.len() as u64).unwrap();
        out.extend_from_slice(&json);
        for e in &self.images {
            for &v in e.features.values() {
                out.write_f64::<LittleEndian>(v).unwrap();
            }
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |reason: String| RetrievalError::Index {
            path: path.to_path_buf(),
            reason,
        };
        let short = |_| bad("file is truncated".into());
        let mut magic = [0u8; 6];
        bytes.read_exact(&mut magic).map_err(short)?;
        if &magic != MAGIC {
            return Err(bad("not an index file".into()));
        }
        let version = bytes.read_u32::<LittleEndian>().map_err(short)?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let len = bytes.read_u64::<LittleEndian>().map_err(short)? as usize;
        if bytes.len() < len {
            return Err(bad("file is truncated".into()));
        }
        let header: Header = serde_json::from_slice(&bytes[..len]).map_err(|e| bad(e.to_string()))?;
        bytes = &bytes[len..];
        let dim = header.steps * header.channels;
        let mut images = Vec::with_capacity(header.images.len());
        for h in header.images {
            if h.boxes.len() != h.scores.len() {
                return Err(bad(format!("image {} has {} boxes and {} scores", h.id, h.boxes.len(), h.scores.len())));
            }
            let n = h.boxes.len() * dim;
            let mut values = vec![0.0; n];
            bytes.read_f64_into::<LittleEndian>(&mut values).map_err(short)?;
            images.push(IndexedImage {
                id: h.id,
                width: h.width,
                height: h.height,
                features: SequenceFeature::new(h.boxes.len(), header.steps, header.channels, values)?,
                proposals: ProposalSet {
                    boxes: h.boxes,
                    scores: h.scores,
                },
            });
        }
        if !bytes.is_empty() {
            return Err(bad(format!("{} trailing bytes", bytes.len())));
        }
        Ok(GalleryIndex {
            fingerprint: header.fingerprint,
            charset: header.charset,
            fold_case: header.fold_case,
            representation: header.representation,
            scales: header.scales,
            steps: header.steps,
            channels: header.channels,
            images,
            warnings: header.warnings,
        })
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let io = |source| RetrievalError::Io {
            path: path.to_path_buf(),
            source,
        };
        let tmp = path.with_extension("tmp");
        let mut f = std::fs::File::create(&tmp).map_err(io)?;
        f.write_all(&self.to_bytes()).map_err(io)?;
        f.sync_all().map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|source| RetrievalError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        GalleryIndex::from_bytes(&bytes, path)
    }
}
