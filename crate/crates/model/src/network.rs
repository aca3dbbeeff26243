//! Graph-building forward passes for every part of the model.

use textseek_core::image::Image;
use textseek_core::{BBox, Word};
use textseek_tensor::{Conv2dSpec, Graph, RoiBox, Tensor, Var};

use crate::config::ModelConfig;
use crate::error::{ModelError, Result};
use crate::fcos::{self, LevelTargets, STRIDES};
use crate::params::Binding;

/// Images are zero-padded (after centring) to a multiple of this.
pub const SIZE_MULTIPLE: usize = 8;

/// The two pyramid levels, `[N, 2C, H/4, W/4]` and `[N, 2C, H/8, W/8]`.
#[derive(Debug, Clone, Copy)]
pub struct Pyramid {
    pub p2: Var,
    pub p3: Var,
}

/// Stacks equally sized images into `[N, 3, H', W']`, centred around zero
/// and padded at the bottom and right to a multiple of [`SIZE_MULTIPLE`].
pub fn images_to_tensor(images: &[&Image]) -> Result<Tensor> {
    let first = images.first().ok_or_else(|| ModelError::InvalidInput("no images".into()))?;
    let (w, h) = (first.width(), first.height());
    if images.iter().any(|i| i.width() != w || i.height() != h) {
        return Err(ModelError::InvalidInput("images in a batch must share one size".into()));
    }
    let pad = |v: usize| v.div_ceil(SIZE_MULTIPLE) * SIZE_MULTIPLE;
    let (pw, ph) = (pad(w), pad(h));
    let mut data = vec![0.0; images.len() * 3 * ph * pw];
    for (n, img) in images.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                let p = img.pixel(x, y);
                for c in 0..3 {
                    data[((n * 3 + c) * ph + y) * pw + x] = p[c] as f64 - 0.5;
                }
            }
        }
    }
    Ok(Tensor::new(&[images.len(), 3, ph, pw], data))
}

fn conv(g: &mut Graph, b: &Binding, name: &str, x: Var, spec: Conv2dSpec) -> Var {
    let w = b.get(&format!("{name}.w"));
    let bias = b.get(&format!("{name}.b"));
    g.conv2d(x, w, Some(bias), spec)
}

/// Number of group-normalization groups for `channels`: at most 8, and a
/// divisor of the channel count.
pub fn norm_groups(channels: usize) -> usize {
    [8, 4, 2, 1].into_iter().find(|g| channels % g == 0).unwrap_or(1)
}

/// Convolution followed by group normalization.
fn conv_norm(g: &mut Graph, b: &Binding, name: &str, x: Var, spec: Conv2dSpec) -> Var {
    let y = conv(g, b, name, x, spec);
    let c = g.shape(y)[1];
    let gamma = b.get(&format!("{name}.gn.g"));
    let beta = b.get(&format!("{name}.gn.b"));
    g.group_norm(y, norm_groups(c), gamma, beta, 1e-5)
}

fn conv_relu(g: &mut Graph, b: &Binding, name: &str, x: Var, spec: Conv2dSpec) -> Var {
    let y = conv_norm(g, b, name, x, spec);
    g.relu(y)
}

fn residual(g: &mut Graph, b: &Binding, name: &str, x: Var) -> Var {
    let a = conv_relu(g, b, &format!("{name}a"), x, Conv2dSpec::same(3));
    let r = conv_norm(g, b, &format!("{name}b"), a, Conv2dSpec::same(3));
    let s = g.add(x, r);
    g.relu(s)
}

/// Residual CNN with a two-level feature pyramid.
pub fn backbone(g: &mut Graph, b: &Binding, images: Var) -> Pyramid {
    let down = Conv2dSpec::new((2, 2), (1, 1));
    let c1 = conv_relu(g, b, "backbone.c1", images, down);
    let c2 = conv_relu(g, b, "backbone.c2", c1, down);
    let c2 = residual(g, b, "backbone.r2", c2);
    let c3 = conv_relu(g, b, "backbone.c3", c2, down);
    let c3 = residual(g, b, "backbone.r3", c3);
    let pointwise = Conv2dSpec::new((1, 1), (0, 0));
    let p3 = conv(g, b, "fpn.lat3", c3, pointwise);
    let lat2 = conv(g, b, "fpn.lat2", c2, pointwise);
    let (h2, w2) = (g.shape(lat2)[2], g.shape(lat2)[3]);
    let up = g.upsample_nearest(p3, h2, w2);
    let merged = g.add(lat2, up);
    let p2 = conv(g, b, "fpn.out2", merged, Conv2dSpec::same(3));
    Pyramid { p2, p3 }
}

/// Shared detection head applied to one level, `[N, 6, h, w]`.
pub fn detection_head(g: &mut Graph, b: &Binding, level: Var) -> Var {
    let t = conv_relu(g, b, "head.tower", level, Conv2dSpec::same(3));
    conv(g, b, "head.out", t, Conv2dSpec::same(3))
}

/// Focal classification + IoU regression + centerness BCE, each normalized
/// the customary way (by positives, and by summed centerness for IoU).
pub fn detection_loss(g: &mut Graph, heads: &[Var], targets: &[LevelTargets]) -> Var {
    let mut flat = Vec::new();
    let mut cls = Vec::new();
    let mut positives = Vec::new();
    let mut distances = Vec::new();
    let mut ctr = Vec::new();
    let mut offset = 0;
    for (&h, t) in heads.iter().zip(targets) {
        let s = g.shape(h).to_vec();
        let rows = s[0] * s[2] * s[3];
        assert_eq!(rows, t.cls.len(), "targets do not match head size");
        let p = g.permute(h, &[0, 2, 3, 1]);
        flat.push(g.reshape(p, &[rows, 6]));
        cls.extend_from_slice(&t.cls);
        positives.extend(t.positives.iter().map(|&i| i + offset));
        distances.extend(t.distances.iter().flat_map(|d| d.iter().copied()));
        ctr.extend_from_slice(&t.centerness);
        offset += rows;
    }
    let all = if flat.len() == 1 { flat[0] } else { g.concat(&flat, 0) };
    let logits = g.narrow(all, 1, 0, 1);
    let cls_t = Tensor::new(&[offset, 1], cls);
    let focal = g.sigmoid_focal_loss(logits, &cls_t, 0.25, 2.0);
    let n_pos = positives.len();
    let focal = g.scale(focal, 1.0 / n_pos.max(1) as f64);
    if n_pos == 0 {
        return focal;
    }
    let pos = g.gather_rows(all, &positives);
    let reg = g.narrow(pos, 1, 1, 4);
    let reg = g.exp(reg);
    let ctr_sum: f64 = ctr.iter().sum();
    let iou = g.iou_loss(reg, &Tensor::new(&[n_pos, 4], distances), &ctr);
    let iou = g.scale(iou, 1.0 / ctr_sum.max(1e-6));
    let ctr_logit = g.narrow(pos, 1, 5, 1);
    let bce = g.bce_with_logits(ctr_logit, &Tensor::new(&[n_pos, 1], ctr), None);
    let bce = g.scale(bce, 1.0 / n_pos as f64);
    let s = g.add(focal, iou);
    g.add(s, bce)
}

/// Detection targets for a batch whose images are `width x height` before
/// padding; `heads` fixes the level sizes.
pub fn detection_targets(g: &Graph, heads: &[Var], gt: &[Vec<BBox>], config: &ModelConfig) -> Vec<LevelTargets> {
    heads
        .iter()
        .enumerate()
        .map(|(level, &h)| {
            let s = g.shape(h);
            fcos::level_targets(gt, level, s[2], s[3], config.level_split)
        })
        .collect()
}

/// Decodes the head outputs of image `n` of a batch.
pub fn decode_proposals(
    g: &Graph,
    heads: &[Var],
    n: usize,
    image_width: usize,
    image_height: usize,
    config: &ModelConfig,
) -> fcos::ProposalSet {
    let levels: Vec<fcos::LevelOutput<'_>> = heads
        .iter()
        .zip(STRIDES)
        .map(|(&h, stride)| {
            let s = g.shape(h);
            let per_image = 6 * s[2] * s[3];
            fcos::LevelOutput {
                stride,
                height: s[2],
                width: s[3],
                data: &g.value(h).data()[n * per_image..(n + 1) * per_image],
            }
        })
        .collect();
    fcos::decode(
        &levels,
        image_width as f64,
        image_height as f64,
        config.score_thresh,
        config.nms_iou,
        config.max_proposals,
    )
}

/// Pools each `(batch index, box)` from the stride-4 level to
/// `[K, 2C, roi_height, T]`, keeping the order of `boxes`.
pub fn roi_features(g: &mut Graph, p2: Var, boxes: &[(usize, BBox)], config: &ModelConfig) -> Result<Var> {
    let stride = STRIDES[0] as f64;
    let mut rois = Vec::with_capacity(boxes.len());
    for (n, b) in boxes {
        if !(b.area() > 0.0) || b.validate().is_err() {
            return Err(ModelError::InvalidInput(format!("degenerate RoI {b:?}")));
        }
        rois.push(RoiBox {
            batch: *n,
            x0: b.x0 / stride - 0.5,
            y0: b.y0 / stride - 0.5,
            x1: b.x1 / stride - 0.5,
            y1: b.y1 / stride - 0.5,
        });
    }
    Ok(g.roi_align(p2, &rois, config.roi_height, config.steps, config.roi_sampling))
}

/// Forward and backward recurrences over `[B, T, I]`, concatenated to `[B, T, 2H]`.
fn bilstm(g: &mut Graph, b: &Binding, name: &str, x: Var) -> Var {
    let p = |d: &str, part: &str| b.get(&format!("{name}.{d}.{part}"));
    let fw = g.lstm(x, p("fw", "w_ih"), p("fw", "w_hh"), p("fw", "b"), false);
    let bw = g.lstm(x, p("bw", "w_ih"), p("bw", "w_hh"), p("bw", "b"), true);
    g.concat(&[fw, bw], 2)
}

/// `[K, 2C, h, T]` RoI features to `[K, T, C]` sequence features: two
/// 3x3 convolutions of stride (2, 1), mean over height, BiLSTM.
pub fn image_s2sm(g: &mut Graph, b: &Binding, rois: Var, config: &ModelConfig) -> Result<Var> {
    let s = g.shape(rois).to_vec();
    let f = config.pyramid_channels();
    if s.len() != 4 || s[1] != f || s[2] % 4 != 0 || s[3] != config.steps {
        return Err(ModelError::InvalidInput(format!(
            "image S2SM expects [K, {f}, 4m, {}], got {s:?}",
            config.steps
        )));
    }
    if s[0] == 0 {
        return Ok(g.constant(Tensor::zeros(&[0, config.steps, config.channels])));
    }
    let spec = Conv2dSpec::new((2, 1), (1, 1));
    let x = conv_relu(g, b, "image_s2sm.conv1", rois, spec);
    let x = conv_relu(g, b, "image_s2sm.conv2", x, spec);
    let x = g.mean_axis(x, 2);
    let x = g.permute(x, &[0, 2, 1]);
    Ok(bilstm(g, b, "image_s2sm", x))
}

/// Linear resampling weights `[T, len]` with the first and last steps on
/// the first and last characters.
pub fn interpolation_weights(len: usize, steps: usize) -> Vec<f64> {
    let mut w = vec![0.0; steps * len];
    for t in 0..steps {
        if len == 1 {
            w[t] = 1.0;
            continue;
        }
        let pos = t as f64 * (len - 1) as f64 / (steps - 1) as f64;
        let lo = (pos.floor() as usize).min(len - 1);
        let frac = pos - lo as f64;
        w[t * len + lo] += 1.0 - frac;
        if frac > 0.0 {
            w[t * len + lo + 1] += frac;
        }
    }
    w
}

/// Embeds each character to `2C` and resamples every word to `T` steps,
/// `[N, T, 2C]`.
pub fn embed_words(g: &mut Graph, b: &Binding, words: &[Word], config: &ModelConfig) -> Result<Var> {
    let f = config.pyramid_channels();
    if words.is_empty() {
        return Ok(g.constant(Tensor::zeros(&[0, config.steps, f])));
    }
    let mut symbols = Vec::new();
    for w in words {
        if w.len() > config.max_word_len {
            return Err(ModelError::InvalidInput(format!(
                "word {:?} has {} symbols, the cap is {}",
                w.as_str(),
                w.len(),
                config.max_word_len
            )));
        }
        for &s in w.symbols() {
            if s as usize >= config.charset_size {
                return Err(ModelError::InvalidInput(format!(
                    "symbol {s} of {:?} is outside a charset of {}",
                    w.as_str(),
                    config.charset_size
                )));
            }
            symbols.push(s as usize);
        }
    }
    let total = symbols.len();
    let t = config.steps;
    let mut interp = vec![0.0; words.len() * t * total];
    let mut col = 0;
    for (n, w) in words.iter().enumerate() {
        let local = interpolation_weights(w.len(), t);
        for step in 0..t {
            for j in 0..w.len() {
                interp[(n * t + step) * total + col + j] = local[step * w.len() + j];
            }
        }
        col += w.len();
    }
    let table = b.get("text.embedding");
    let chars = g.gather_rows(table, &symbols);
    let m = g.constant(Tensor::new(&[words.len() * t, total], interp));
    let seq = g.matmul(m, chars);
    Ok(g.reshape(seq, &[words.len(), t, f]))
}

/// `[N, T, 2C]` to `[N, T, C]`: pointwise projection, BiLSTM.
pub fn text_s2sm(g: &mut Graph, b: &Binding, x: Var, config: &ModelConfig) -> Result<Var> {
    let s = g.shape(x).to_vec();
    let f = config.pyramid_channels();
    if s.len() != 3 || s[1] != config.steps || s[2] != f {
        return Err(ModelError::InvalidInput(format!(
            "text S2SM expects [N, {}, {f}], got {s:?}",
            config.steps
        )));
    }
    if s[0] == 0 {
        return Ok(g.constant(Tensor::zeros(&[0, config.steps, config.channels])));
    }
    let y = g.linear(x, b.get("text_s2sm.proj.w"), Some(b.get("text_s2sm.proj.b")));
    let y = g.relu(y);
    Ok(bilstm(g, b, "text_s2sm", y))
}

/// Per-step class scores `[K, T, |charset| + 1]`; the last class is blank.
pub fn ctc_logits(g: &mut Graph, b: &Binding, e: Var) -> Var {
    g.linear(e, b.get("ctc.w"), Some(b.get("ctc.b")))
}

/// Per-proposal PHOC logits `[K, D]` from flattened features.
pub fn phoc_logits(g: &mut Graph, b: &Binding, e: Var, config: &ModelConfig) -> Var {
    let k = g.shape(e)[0];
    let flat = g.reshape(e, &[k, config.feature_dim()]);
    g.linear(flat, b.get("phoc.w"), Some(b.get("phoc.b")))
}

/// `tanh`, flatten to `[K, T*C]`, unit rows.
pub fn squash(g: &mut Graph, x: Var) -> Result<Var> {
    let s = g.shape(x).to_vec();
    let t = g.tanh(x);
    let flat = g.reshape(t, &[s[0], s[1..].iter().product()]);
    Ok(g.l2_normalize_rows(flat)?)
}

/// Cosine similarity matrix between two squashed feature sets.
pub fn cosine(g: &mut Graph, a: Var, b: Var) -> Var {
    g.matmul_nt(a, b)
}

/// Argmax per step, merge repeats, drop blanks.
pub fn greedy_decode(logits: &Tensor, blank: usize) -> Vec<Vec<u32>> {
    let s = logits.shape();
    let (k, t, v) = (s[0], s[1], s[2]);
    let d = logits.data();
    (0..k)
        .map(|i| {
            let mut out = Vec::new();
            let mut prev = None;
            for step in 0..t {
                let row = &d[(i * t + step) * v..(i * t + step + 1) * v];
                let best = (0..v).fold(0, |m, c| if row[c] > row[m] { c } else { m });
                if Some(best) != prev && best != blank {
                    out.push(best as u32);
                }
                prev = Some(best);
            }
            out
        })
        .collect()
}
