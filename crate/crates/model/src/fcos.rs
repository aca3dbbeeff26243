//! Anchor-free detection targets, decoding and non-maximum suppression.

use serde::{Deserialize, Serialize};
use textseek_core::BBox;

/// Strides of the detection levels.
pub const STRIDES: [usize; 2] = [4, 8];

/// Detected boxes, highest score first.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProposalSet {
    pub boxes: Vec<BBox>,
    pub scores: Vec<f64>,
}

impl ProposalSet {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

/// Image-space centre of feature cell `(row, col)` at `stride`.
pub fn location(row: usize, col: usize, stride: usize) -> (f64, f64) {
    let s = stride as f64;
    (col as f64 * s + s / 2.0, row as f64 * s + s / 2.0)
}

/// Distances `(l, t, r, b)` from `(x, y)` to the sides of `b`.
pub fn side_distances(x: f64, y: f64, b: &BBox) -> [f64; 4] {
    [x - b.x0, y - b.y0, b.x1 - x, b.y1 - y]
}

/// Box from a point and its side distances.
pub fn box_from_distances(x: f64, y: f64, d: [f64; 4]) -> BBox {
    BBox {
        x0: x - d[0],
        y0: y - d[1],
        x1: x + d[2],
        y1: y + d[3],
    }
}

pub fn centerness(d: [f64; 4]) -> f64 {
    let lr = d[0].min(d[2]) / d[0].max(d[2]);
    let tb = d[1].min(d[3]) / d[1].max(d[3]);
    (lr * tb).sqrt()
}

/// Targets for one level of a batch, flattened over `(image, row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelTargets {
    pub stride: usize,
    pub height: usize,
    pub width: usize,
    /// 1 at positive locations, 0 elsewhere.
    pub cls: Vec<f64>,
    /// Flat indices of positive locations.
    pub positives: Vec<usize>,
    /// Per positive: side distances in units of the stride.
    pub distances: Vec<[f64; 4]>,
    /// Per positive: centerness target.
    pub centerness: Vec<f64>,
}

/// Level a box belongs to: the finest whose range covers the largest side
/// distance of the location.
fn level_of(max_distance: f64, split: f64) -> usize {
    if max_distance <= split {
        0
    } else {
        1
    }
}

/// A location is positive at a level when it lies strictly inside a ground
/// truth box whose largest side distance from it falls into that level's
/// range; the smallest such box wins.
pub fn level_targets(gt: &[Vec<BBox>], level: usize, height: usize, width: usize, split: f64) -> LevelTargets {
    let stride = STRIDES[level];
    let per_image = height * width;
    let mut t = LevelTargets {
        stride,
        height,
        width,
        cls: vec![0.0; gt.len() * per_image],
        positives: Vec::new(),
        distances: Vec::new(),
        centerness: Vec::new(),
    };
    for (n, boxes) in gt.iter().enumerate() {
        for row in 0..height {
            for col in 0..width {
                let (x, y) = location(row, col, stride);
                let mut best: Option<(f64, [f64; 4])> = None;
                for b in boxes {
                    let d = side_distances(x, y, b);
                    if d.iter().any(|&v| v <= 0.0) {
                        continue;
                    }
                    let m = d.iter().cloned().fold(0.0, f64::max);
                    if level_of(m, split) != level {
                        continue;
                    }
                    if best.map_or(true, |(area, _)| b.area() < area) {
                        best = Some((b.area(), d));
                    }
                }
                if let Some((_, d)) = best {
                    let idx = n * per_image + row * width + col;
                    t.cls[idx] = 1.0;
                    t.positives.push(idx);
                    t.distances.push(d.map(|v| v / stride as f64));
                    t.centerness.push(centerness(d));
                }
            }
        }
    }
    t
}

/// Raw head output of one image at one level, channel-major `[6, h, w]`:
/// class logit, four log side distances in stride units, centerness logit.
pub struct LevelOutput<'a> {
    pub stride: usize,
    pub height: usize,
    pub width: usize,
    pub data: &'a [f64],
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Scores every location as `sqrt(sigmoid(cls) * sigmoid(ctr))`, keeps those
/// above `score_thresh`, clips boxes to the image and applies NMS.
pub fn decode(
    levels: &[LevelOutput<'_>],
    image_width: f64,
    image_height: f64,
    score_thresh: f64,
    nms_iou: f64,
    max_proposals: usize,
) -> ProposalSet {
    const PRE_NMS: usize = 1000;
    let mut cands: Vec<(f64, BBox)> = Vec::new();
    for lv in levels {
        let plane = lv.height * lv.width;
        for row in 0..lv.height {
            for col in 0..lv.width {
                let at = |c: usize| lv.data[c * plane + row * lv.width + col];
                let score = (sigmoid(at(0)) * sigmoid(at(5))).sqrt();
                if score <= score_thresh {
                    continue;
                }
                let (x, y) = location(row, col, lv.stride);
                let s = lv.stride as f64;
                let d = [at(1), at(2), at(3), at(4)].map(|v| v.min(20.0).exp() * s);
                let b = box_from_distances(x, y, d).clamp_to(image_width, image_height);
                if b.width() > 0.5 && b.height() > 0.5 {
                    cands.push((score, b));
                }
            }
        }
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0));
    cands.truncate(PRE_NMS);
    let keep = nms(&cands, nms_iou, max_proposals);
    ProposalSet {
        boxes: keep.iter().map(|&i| cands[i].1).collect(),
        scores: keep.iter().map(|&i| cands[i].0).collect(),
    }
}

/// Greedy NMS over candidates sorted by descending score; returns kept
/// indices.
pub fn nms(sorted: &[(f64, BBox)], iou: f64, max_keep: usize) -> Vec<usize> {
    let mut keep: Vec<usize> = Vec::new();
    for (i, (_, b)) in sorted.iter().enumerate() {
        if keep.len() >= max_keep {
            break;
        }
        if keep.iter().all(|&k| sorted[k].1.iou(b) <= iou) {
            keep.push(i);
        }
    }
    keep
}
