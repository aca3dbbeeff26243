//! Scoring images against queries, ranking, mAP and annotation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use textseek_core::image::Image;
use textseek_core::metrics::mean_average_precision;
use textseek_core::{BBox, Word};

use crate::error::{Result, RetrievalError};
use crate::index::{index_image, GalleryIndex};
use crate::retriever::{QueryVector, Retriever};

/// Score of an image with no proposals; below any cosine similarity.
pub const EMPTY_SCORE: f64 = -1.0;

/// Best proposal of an image for one query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub score: f64,
    #[serde(rename = "box")]
    pub bbox: Option<BBox>,
}

/// Maximum of one similarity row and the box that attains it (the first on
/// ties). An empty row scores [`EMPTY_SCORE`].
pub fn best_proposal(similarities: &[f64], boxes: &[BBox]) -> ImageScore {
    assert_eq!(similarities.len(), boxes.len(), "one similarity per box");
    let mut best = ImageScore {
        score: EMPTY_SCORE,
        bbox: None,
    };
    for (s, b) in similarities.iter().zip(boxes) {
        if best.bbox.is_none() || *s > best.score {
            best = ImageScore {
                score: *s,
                bbox: Some(*b),
            };
        }
    }
    best
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0)
}

/// Cosine similarity of `query` to every proposal; proposals whose feature
/// vanishes score [`EMPTY_SCORE`].
fn similarities(query: &[f64], vectors: &[Option<Vec<f64>>]) -> Vec<f64> {
    vectors
        .iter()
        .map(|v| v.as_ref().map_or(EMPTY_SCORE, |v| dot(query, v)))
        .collect()
}

fn check_query(index: &GalleryIndex, query: &QueryVector) -> Result<()> {
    let dim = index.steps * index.channels;
    if query.vector.len() != dim {
        return Err(RetrievalError::InvalidInput(format!(
            "query vector has {} values, the index stores {dim}",
            query.vector.len()
        )));
    }
    Ok(())
}

/// Score of gallery image `i` for `query`.
pub fn score_image(index: &GalleryIndex, i: usize, query: &QueryVector) -> Result<ImageScore> {
    check_query(index, query)?;
    let sims = similarities(&query.vector, &index.proposal_vectors(i));
    Ok(best_proposal(&sims, &index.images[i].proposals.boxes))
}

/// One entry of a ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedImage {
    pub image: String,
    pub score: f64,
    #[serde(rename = "box")]
    pub bbox: Option<BBox>,
}

/// A ranked gallery for one query; serializes as
/// `{"query": ..., "ranking": [{"image", "score", "box"}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query: String,
    pub ranking: Vec<RankedImage>,
}

impl RetrievalResult {
    pub fn truncate(&mut self, top_k: usize) {
        self.ranking.truncate(top_k);
    }
}

/// Proposal vectors of every image, computed once for many queries.
pub struct PreparedIndex<'a> {
    index: &'a GalleryIndex,
    vectors: Vec<Vec<Option<Vec<f64>>>>,
}

impl<'a> PreparedIndex<'a> {
    pub fn new(index: &'a GalleryIndex) -> Self {
        let vectors = (0..index.images.len()).map(|i| index.proposal_vectors(i)).collect();
        PreparedIndex { index, vectors }
    }

    /// All images by descending score, ties by image id.
    pub fn rank(&self, query: &QueryVector) -> Result<RetrievalResult> {
        check_query(self.index, query)?;
        let mut ranking: Vec<RankedImage> = self
            .index
            .images
            .iter()
            .zip(&self.vectors)
            .map(|(img, vecs)| {
                let s = best_proposal(&similarities(&query.vector, vecs), &img.proposals.boxes);
                RankedImage {
                    image: img.id.clone(),
                    score: s.score,
                    bbox: s.bbox,
                }
            })
            .collect();
        ranking.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.image.cmp(&b.image)));
        Ok(RetrievalResult {
            query: query.word.as_str().to_string(),
            ranking,
        })
    }
}

pub fn rank_gallery(index: &GalleryIndex, query: &QueryVector) -> Result<RetrievalResult> {
    PreparedIndex::new(index).rank(query)
}

fn check_index(retriever: &Retriever, index: &GalleryIndex) -> Result<()> {
    if !index.matches(retriever) {
        return Err(RetrievalError::InvalidInput(
            "the index was built by a different checkpoint".into(),
        ));
    }
    Ok(())
}

/// Parses, embeds and ranks one textual query.
pub fn retrieve(retriever: &Retriever, index: &GalleryIndex, query: &str) -> Result<RetrievalResult> {
    check_index(retriever, index)?;
    let word = retriever.parse_query(query)?;
    let q = retriever.encode_queries(&[word])?.remove(0);
    rank_gallery(index, &q)
}

/// Whether any transcript equals the query, optionally ignoring case.
pub fn is_relevant(query: &str, transcripts: &[String], fold_case: bool) -> bool {
    if fold_case {
        let q = query.to_lowercase();
        transcripts.iter().any(|t| t.to_lowercase() == q)
    } else {
        transcripts.iter().any(|t| t == query)
    }
}

/// Average precision of one query; `None` when no image is relevant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryAp {
    pub query: String,
    pub ap: Option<f64>,
    pub relevant: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub map: f64,
    pub queries: Vec<QueryAp>,
    /// Queries without relevant images, left out of the mean.
    pub skipped: usize,
}

/// Mean AP of `queries` over the index. `ground_truth` maps image ids to
/// their transcripts; images missing from it have none.
pub fn mean_ap(
    retriever: &Retriever,
    index: &GalleryIndex,
    queries: &[String],
    ground_truth: &BTreeMap<String, Vec<String>>,
    fold_case: bool,
) -> Result<MapReport> {
    check_index(retriever, index)?;
    let words: Vec<Word> = queries.iter().map(|q| retriever.parse_query(q)).collect::<Result<_>>()?;
    let vectors = retriever.encode_queries(&words)?;
    let prepared = PreparedIndex::new(index);
    let none = Vec::new();
    let mut rankings = Vec::with_capacity(queries.len());
    for (text, q) in queries.iter().zip(&vectors) {
        let result = prepared.rank(q)?;
        rankings.push(
            result
                .ranking
                .iter()
                .map(|r| is_relevant(text, ground_truth.get(&r.image).unwrap_or(&none), fold_case))
                .collect::<Vec<bool>>(),
        );
    }
    for (q, r) in queries.iter().zip(&rankings) {
        if !r.iter().any(|&x| x) {
            log::warn!("query {q:?} has no relevant image and is left out of the mean");
        }
    }
    let m = mean_average_precision(&rankings)?;
    Ok(MapReport {
        map: m.map,
        skipped: m.skipped,
        queries: queries
            .iter()
            .zip(&m.per_query)
            .zip(&rankings)
            .map(|((q, ap), r)| QueryAp {
                query: q.clone(),
                ap: *ap,
                relevant: r.iter().filter(|&&x| x).count(),
            })
            .collect(),
    })
}

/// A word placed on the image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordBox {
    pub word: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub annotated: Vec<WordBox>,
    /// Words for which the image had no proposal.
    pub unannotated: Vec<String>,
}

/// Places each word on the proposal most similar to it.
pub fn annotate(retriever: &Retriever, image: &Image, words: &[Word], scales: &[usize]) -> Result<Annotation> {
    let entry = index_image(retriever, "", image, scales)?;
    let vectors = crate::retriever::embed(&entry.features, retriever.representation());
    let queries = retriever.encode_queries(words)?;
    let mut out = Annotation {
        annotated: Vec::new(),
        unannotated: Vec::new(),
    };
    for q in &queries {
        let best = best_proposal(&similarities(&q.vector, &vectors), &entry.proposals.boxes);
        match best.bbox {
            Some(bbox) => out.annotated.push(WordBox {
                word: q.word.as_str().to_string(),
                bbox,
                score: best.score,
            }),
            None => out.unannotated.push(q.word.as_str().to_string()),
        }
    }
    Ok(out)
}
