//! Query construction and proposal-to-ground-truth assignment for one batch.

use rand::Rng;
use textseek_core::augment::{augment_query_set, EditOperatorRatios};
use textseek_core::{BBox, Charset, Word};

use crate::error::Result;

/// Query words of one batch: `Q` and `Q~`, where `Q~` starts with `Q` and
/// continues with one pseudoword per query.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySet {
    pub queries: Vec<Word>,
    pub augmented: Vec<Word>,
}

/// Deduplicates the batch transcripts (keeping first occurrences) and
/// augments them. Returns `None` when the batch holds no text, which the
/// caller treats as a signal to skip the batch.
pub fn build_queries<R: Rng + ?Sized>(
    transcripts: &[Word],
    ratios: &EditOperatorRatios,
    charset: &Charset,
    max_len: usize,
    rng: &mut R,
) -> Result<Option<QuerySet>> {
    let mut queries: Vec<Word> = Vec::new();
    for w in transcripts {
        if !queries.iter().any(|q| q.symbols() == w.symbols()) {
            queries.push(w.clone());
        }
    }
    if queries.is_empty() {
        return Ok(None);
    }
    let augmented = augment_query_set(&queries, ratios, charset, max_len, rng)?;
    Ok(Some(QuerySet { queries, augmented }))
}

/// A proposal kept for the similarity and CTC losses.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedProposal {
    pub bbox: BBox,
    /// Index of the ground-truth instance it was assigned to.
    pub gt: usize,
    pub iou: f64,
}

/// Assigns each proposal to the ground-truth box it overlaps most and keeps
/// it when that overlap reaches `min_iou`. Several proposals may share one
/// instance. Order follows `proposals`.
pub fn match_proposals(proposals: &[BBox], gt: &[BBox], min_iou: f64) -> Vec<MatchedProposal> {
    let mut out = Vec::new();
    for p in proposals {
        let mut best: Option<(usize, f64)> = None;
        for (i, g) in gt.iter().enumerate() {
            let iou = p.iou(g);
            if best.map_or(true, |(_, b)| iou > b) {
                best = Some((i, iou));
            }
        }
        if let Some((i, iou)) = best {
            if iou >= min_iou {
                out.push(MatchedProposal { bbox: *p, gt: i, iou });
            }
        }
    }
    out
}

/// Training proposals of one image: at most `per_gt` detected boxes per
/// instance (highest overlap first), followed by every ground-truth box.
pub fn training_proposals(proposals: &[BBox], gt: &[BBox], min_iou: f64, per_gt: usize) -> Vec<MatchedProposal> {
    let mut matched = match_proposals(proposals, gt, min_iou);
    matched.sort_by(|a, b| a.gt.cmp(&b.gt).then(b.iou.total_cmp(&a.iou)));
    let mut kept = Vec::new();
    let mut count = vec![0usize; gt.len()];
    for m in matched {
        if count[m.gt] < per_gt {
            count[m.gt] += 1;
            kept.push(m);
        }
    }
    kept.extend(gt.iter().enumerate().map(|(i, b)| MatchedProposal { bbox: *b, gt: i, iou: 1.0 }));
    kept
}
