//! Ranking and detection metrics.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::BBox;

/// Mean of precision@k over the ranks `k` that hold a relevant item.
///
/// `relevance` is in rank order. Fails when nothing is relevant.
pub fn average_precision(relevance: &[bool]) -> Result<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &rel) in relevance.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    if hits == 0 {
        return Err(Error::Undefined("average precision with no relevant items".into()));
    }
    Ok(sum / hits as f64)
}

/// Unweighted mean of per-query AP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanAp {
    pub map: f64,
    pub per_query: Vec<Option<f64>>,
    /// Queries without any relevant item; excluded from the mean.
    pub skipped: usize,
}

pub fn mean_average_precision(rankings: &[Vec<bool>]) -> Result<MeanAp> {
    let per_query: Vec<Option<f64>> = rankings.iter().map(|r| average_precision(r).ok()).collect();
    let evaluated: Vec<f64> = per_query.iter().flatten().copied().collect();
    if evaluated.is_empty() {
        return Err(invalid("no query has a relevant item"));
    }
    Ok(MeanAp {
        map: evaluated.iter().sum::<f64>() / evaluated.len() as f64,
        skipped: per_query.len() - evaluated.len(),
        per_query,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionScore {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub matched: usize,
}

/// Greedy one-to-one matching in descending IoU order.
///
/// Empty predictions score precision 0 (and empty ground truth recall 0).
pub fn detection_f_measure(pred: &[BBox], gt: &[BBox], iou_thresh: f64) -> Result<DetectionScore> {
    if !(iou_thresh > 0.0 && iou_thresh < 1.0) {
        return Err(invalid(format!("IoU threshold {iou_thresh} is outside (0, 1)")));
    }
    let mut pairs = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            let iou = p.iou(g);
            if iou >= iou_thresh {
                pairs.push((iou, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pred_used = vec![false; pred.len()];
    let mut gt_used = vec![false; gt.len()];
    let mut matched = 0;
    for (_, i, j) in pairs {
        if !pred_used[i] && !gt_used[j] {
            pred_used[i] = true;
            gt_used[j] = true;
            matched += 1;
        }
    }
    Ok(score_from_counts(matched, pred.len(), gt.len()))
}

/// Precision, recall and F from match counts; empty denominators give 0.
pub fn score_from_counts(matched: usize, n_pred: usize, n_gt: usize) -> DetectionScore {
    let precision = if n_pred == 0 { 0.0 } else { matched as f64 / n_pred as f64 };
    let recall = if n_gt == 0 { 0.0 } else { matched as f64 / n_gt as f64 };
    let f_measure = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    DetectionScore {
        precision,
        recall,
        f_measure,
        matched,
    }
}
