//! A trained checkpoint wrapped for indexing and querying.

use std::path::Path;

use serde::{Deserialize, Serialize};
use textseek_core::image::Image;
use textseek_core::phoc::phoc_encode;
use textseek_core::{Charset, SequenceFeature, Word};
use textseek_model::{meta, Checkpoint, Model, ProposalSet};

use crate::error::{Result, RetrievalError};

/// How proposals and queries are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// Learned sequence features; cosine after `tanh` and flattening.
    Sequence,
    /// Predicted PHOC vectors against the query's PHOC.
    Phoc,
}

#[derive(Debug, Clone)]
enum Encoder {
    /// Proposal features pooled from the detector's own feature map.
    Shared,
    /// A second network that encodes resized crops of the detections.
    Crops(Model),
}

/// Detection, proposal encoding and query encoding from one checkpoint.
#[derive(Debug, Clone)]
pub struct Retriever {
    detector: Model,
    encoder: Encoder,
    representation: Representation,
    charset: Charset,
    fingerprint: String,
}

/// A query embedded as one unit vector.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryVector {
    pub word: Word,
    pub vector: Vec<f64>,
}

/// Scales `v` to unit length; `None` for a zero vector.
pub(crate) fn unit(v: Vec<f64>) -> Option<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 0.0 && n.is_finite()).then(|| v.into_iter().map(|x| x / n).collect())
}

/// Unit vectors of each item of `features` in the space of `representation`.
pub(crate) fn embed(features: &SequenceFeature, representation: Representation) -> Vec<Option<Vec<f64>>> {
    (0..features.count())
        .map(|i| {
            let flat = features.flat(i);
            match representation {
                Representation::Sequence => unit(flat.iter().map(|v| v.tanh()).collect()),
                Representation::Phoc => unit(flat.to_vec()),
            }
        })
        .collect()
}

impl Retriever {
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let text = ck
            .meta
            .get(meta::CHARSET)
            .ok_or_else(|| RetrievalError::Checkpoint("has no charset".into()))?;
        let fold = ck.meta.get(meta::FOLD_CASE).is_some_and(|v| v == "true");
        let charset = Charset::from_text(text)?.with_case_folding(fold);
        if charset.len() != ck.config.charset_size {
            return Err(RetrievalError::Checkpoint(format!(
                "charset has {} symbols but the model was built for {}",
                charset.len(),
                ck.config.charset_size
            )));
        }
        let detector = Model::new(ck.config.clone(), ck.params.clone())?;
        let encoder = match &ck.retrieval {
            Some(p) => Encoder::Crops(Model::new(ck.config.clone(), p.clone())?),
            None => Encoder::Shared,
        };
        let representation = match ck.meta.get(meta::MODE).map(String::as_str) {
            Some("phoc_head") => Representation::Phoc,
            _ => Representation::Sequence,
        };
        Ok(Retriever {
            detector,
            encoder,
            representation,
            charset,
            fingerprint: ck.fingerprint(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Retriever::from_checkpoint(&Checkpoint::load(path)?)
    }

    pub fn charset(&self) -> &Charset {
        &self.charset
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    pub fn detector(&self) -> &Model {
        &self.detector
    }

    /// Width of the stored per-proposal vectors.
    pub fn feature_shape(&self) -> (usize, usize) {
        let c = &self.detector.config;
        match self.representation {
            Representation::Sequence => (c.steps, c.channels),
            Representation::Phoc => (1, c.phoc_dim()),
        }
    }

    /// Proposals of one image and their stored features.
    pub fn encode_image(&self, image: &Image) -> Result<(ProposalSet, SequenceFeature)> {
        let (proposals, shared) = self.detector.detect_and_encode(image)?;
        let features = match &self.encoder {
            Encoder::Shared => shared,
            Encoder::Crops(m) => m.encode_crops(image, &proposals.boxes)?,
        };
        let features = match self.representation {
            Representation::Sequence => features,
            Representation::Phoc => {
                let (t, d) = self.feature_shape();
                let net = match &self.encoder {
                    Encoder::Shared => &self.detector,
                    Encoder::Crops(m) => m,
                };
                let values: Vec<f64> = net.predict_phoc(&features).into_iter().flatten().collect();
                SequenceFeature::new(proposals.len(), t, d, values)?
            }
        };
        Ok((proposals, features))
    }

    /// Spells `text` over the charset; symbols outside it are an error.
    pub fn parse_query(&self, text: &str) -> Result<Word> {
        self.charset
            .encode(text)
            .map_err(|e| RetrievalError::InvalidInput(format!("query {text:?}: {e}")))
    }

    pub fn encode_queries(&self, words: &[Word]) -> Result<Vec<QueryVector>> {
        let raw: Vec<Vec<f64>> = match self.representation {
            Representation::Sequence => {
                let net = match &self.encoder {
                    Encoder::Shared => &self.detector,
                    Encoder::Crops(m) => m,
                };
                let f = net.encode_words(words)?;
                (0..f.count()).map(|i| f.flat(i).iter().map(|v| v.tanh()).collect()).collect()
            }
            Representation::Phoc => words
                .iter()
                .map(|w| Ok(phoc_encode(w, &self.charset, &self.detector.config.phoc_levels)?.to_f64()))
                .collect::<Result<_>>()?,
        };
        words
            .iter()
            .zip(raw)
            .map(|(w, v)| {
                let vector = unit(v)
                    .ok_or_else(|| RetrievalError::InvalidInput(format!("query {:?} embeds to zero", w.as_str())))?;
                Ok(QueryVector {
                    word: w.clone(),
                    vector,
                })
            })
            .collect()
    }
}
