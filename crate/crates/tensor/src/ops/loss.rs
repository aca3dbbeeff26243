//! Losses with fused, hand-derived gradients. All return scalars.

use crate::graph::{Graph, Var};
use crate::ops::basic::sigmoid;
use crate::tensor::Tensor;

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Whether a label sequence fits into `steps` CTC frames: every symbol needs
/// a frame and every adjacent repeat needs a blank between.
pub fn ctc_feasible(target: &[u32], steps: usize) -> bool {
    let repeats = target.windows(2).filter(|w| w[0] == w[1]).count();
    target.len() + repeats <= steps
}

impl Graph {
    /// Summed binary cross-entropy between `sigmoid(logits)` and `targets`
    /// (which may be soft), each element scaled by `weights` if given.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &Tensor, weights: Option<&Tensor>) -> Var {
        let x = self.value(logits);
        assert_eq!(x.shape(), targets.shape(), "bce target shape");
        let w: Vec<f64> = match weights {
            Some(w) => {
                assert_eq!(w.numel(), x.numel(), "bce weight length");
                w.data().to_vec()
            }
            None => vec![1.0; x.numel()],
        };
        let y = targets.data().to_vec();
        let loss: f64 = x.data().iter().zip(&y).zip(&w).map(|((&x, &y), &w)| w * (softplus(x) - y * x)).sum();
        self.custom(&[logits], Tensor::scalar(loss), move |a| {
            let g = a.grad.item();
            let gx: Vec<f64> = a.inputs[0].data().iter().zip(&y).zip(&w).map(|((&x, &y), &w)| g * w * (sigmoid(x) - y)).collect();
            vec![Some(Tensor::new(a.inputs[0].shape(), gx))]
        })
    }

    /// Summed sigmoid focal loss against binary `targets`.
    pub fn sigmoid_focal_loss(&mut self, logits: Var, targets: &Tensor, alpha: f64, gamma: f64) -> Var {
        let x = self.value(logits);
        assert_eq!(x.shape(), targets.shape(), "focal target shape");
        let y: Vec<bool> = targets.data().iter().map(|&t| t > 0.5).collect();
        let mut loss = 0.0;
        for (&x, &pos) in x.data().iter().zip(&y) {
            let p = sigmoid(x);
            loss += if pos {
                alpha * (1.0 - p).powf(gamma) * softplus(-x)
            } else {
                (1.0 - alpha) * p.powf(gamma) * softplus(x)
            };
        }
        self.custom(&[logits], Tensor::scalar(loss), move |a| {
            let g = a.grad.item();
            let gx: Vec<f64> = a.inputs[0]
                .data()
                .iter()
                .zip(&y)
                .map(|(&x, &pos)| {
                    let p = sigmoid(x);
                    let d = if pos {
                        // log p = -softplus(-x)
                        alpha * (1.0 - p).powf(gamma) * (-gamma * p * softplus(-x) - (1.0 - p))
                    } else {
                        // log(1 - p) = -softplus(x)
                        (1.0 - alpha) * p.powf(gamma) * (p + gamma * (1.0 - p) * softplus(x))
                    };
                    g * d
                })
                .collect();
            vec![Some(Tensor::new(a.inputs[0].shape(), gx))]
        })
    }

    /// Summed `-ln IoU` between boxes given as positive side distances
    /// `(l, t, r, b)` from a shared anchor point, `pred` and `target` of
    /// shape `[M, 4]`, each row scaled by `weights[m]`.
    pub fn iou_loss(&mut self, pred: Var, target: &Tensor, weights: &[f64]) -> Var {
        let p = self.value(pred);
        assert_eq!(p.shape(), target.shape(), "iou target shape");
        assert_eq!(p.ndim(), 2);
        assert_eq!(p.dim(1), 4);
        assert_eq!(weights.len(), p.dim(0));
        let tgt = target.data().to_vec();
        let weights = weights.to_vec();
        let parts = |pr: &[f64], tr: &[f64]| {
            let wi = pr[0].min(tr[0]) + pr[2].min(tr[2]);
            let hi = pr[1].min(tr[1]) + pr[3].min(tr[3]);
            let inter = wi * hi;
            let area_p = (pr[0] + pr[2]) * (pr[1] + pr[3]);
            let area_t = (tr[0] + tr[2]) * (tr[1] + tr[3]);
            (wi, hi, inter, area_p + area_t - inter)
        };
        let mut loss = 0.0;
        for ((pr, tr), w) in p.data().chunks_exact(4).zip(tgt.chunks_exact(4)).zip(&weights) {
            let (_, _, inter, union) = parts(pr, tr);
            loss += w * (union.ln() - inter.ln());
        }
        self.custom(&[pred], Tensor::scalar(loss), move |a| {
            let g = a.grad.item();
            let mut gp = vec![0.0; a.inputs[0].numel()];
            for (m, ((pr, tr), w)) in a.inputs[0].data().chunks_exact(4).zip(tgt.chunks_exact(4)).zip(&weights).enumerate() {
                let (wi, hi, inter, union) = parts(pr, tr);
                let (pw, ph) = (pr[0] + pr[2], pr[1] + pr[3]);
                for k in 0..4 {
                    let horizontal = k % 2 == 0;
                    let d_inter = if pr[k] <= tr[k] { if horizontal { hi } else { wi } } else { 0.0 };
                    let d_area = if horizontal { ph } else { pw };
                    let d_union = d_area - d_inter;
                    gp[m * 4 + k] = g * w * (d_union / union - d_inter / inter);
                }
            }
            vec![Some(Tensor::new(a.inputs[0].shape(), gp))]
        })
    }

    /// Connectionist temporal classification loss over raw `logits: [K, T, V]`
    /// (softmax is applied inside). Each sequence's negative log-likelihood
    /// is divided by its target length and the result averaged over the
    /// sequences whose target fits into `T` frames; the rest are left out of
    /// both the sum and the count.
    pub fn ctc_loss(&mut self, logits: Var, targets: &[Vec<u32>], blank: u32) -> Var {
        let shape = self.value(logits).shape().to_vec();
        assert_eq!(shape.len(), 3, "ctc logits must be [K, T, V]");
        let (k, t, v) = (shape[0], shape[1], shape[2]);
        assert_eq!(targets.len(), k, "one target per sequence");
        assert!((blank as usize) < v);
        let src = self.value(logits).data();
        let feasible: Vec<usize> = (0..k).filter(|&i| ctc_feasible(&targets[i], t)).collect();
        let count = feasible.len();
        let mut loss = 0.0;
        // Per feasible sequence: gradient of its NLL w.r.t. its logits.
        let mut grads: Vec<(usize, Vec<f64>)> = Vec::with_capacity(count);
        for &i in &feasible {
            let (nll, mut grad) = ctc_single(&src[i * t * v..(i + 1) * t * v], t, v, &targets[i], blank as usize);
            let len = targets[i].len().max(1) as f64;
            grad.iter_mut().for_each(|x| *x /= len);
            loss += nll / len;
            grads.push((i, grad));
        }
        let denom = count.max(1) as f64;
        self.custom(&[logits], Tensor::scalar(loss / denom), move |a| {
            let g = a.grad.item() / denom;
            let mut gx = vec![0.0; k * t * v];
            for (i, grad) in &grads {
                for (dst, s) in gx[i * t * v..(i + 1) * t * v].iter_mut().zip(grad) {
                    *dst = g * s;
                }
            }
            vec![Some(Tensor::new(&[k, t, v], gx))]
        })
    }
}

/// Negative log-likelihood of one label sequence and its gradient with
/// respect to the `[T, V]` logits, by the log-space forward-backward sweep.
fn ctc_single(logits: &[f64], t: usize, v: usize, target: &[u32], blank: usize) -> (f64, Vec<f64>) {
    let mut logp = vec![0.0; t * v];
    for step in 0..t {
        let row = &logits[step * v..(step + 1) * v];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        for c in 0..v {
            logp[step * v + c] = row[c] - lse;
        }
    }
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(blank);
    for &c in target {
        ext.push(c as usize);
        ext.push(blank);
    }
    let s_len = ext.len();
    let neg = f64::NEG_INFINITY;
    let can_skip = |s: usize| s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];
    // alpha includes the emission at its own frame; beta excludes it.
    let mut alpha = vec![neg; t * s_len];
    alpha[0] = logp[ext[0]];
    if s_len > 1 {
        alpha[1] = logp[ext[1]];
    }
    for step in 1..t {
        for s in 0..s_len {
            let prev = &alpha[(step - 1) * s_len..step * s_len];
            let mut acc = prev[s];
            if s >= 1 {
                acc = log_sum_exp(acc, prev[s - 1]);
            }
            if can_skip(s) {
                acc = log_sum_exp(acc, prev[s - 2]);
            }
            alpha[step * s_len + s] = if acc == neg { neg } else { acc + logp[step * v + ext[s]] };
        }
    }
    let last = (t - 1) * s_len;
    let mut log_p = alpha[last + s_len - 1];
    if s_len > 1 {
        log_p = log_sum_exp(log_p, alpha[last + s_len - 2]);
    }
    let mut beta = vec![neg; t * s_len];
    beta[last + s_len - 1] = 0.0;
    if s_len > 1 {
        beta[last + s_len - 2] = 0.0;
    }
    for step in (0..t - 1).rev() {
        for s in 0..s_len {
            let next = |j: usize| beta[(step + 1) * s_len + j] + logp[(step + 1) * v + ext[j]];
            let mut acc = next(s);
            if s + 1 < s_len {
                acc = log_sum_exp(acc, next(s + 1));
            }
            if s + 2 < s_len && can_skip(s + 2) {
                acc = log_sum_exp(acc, next(s + 2));
            }
            beta[step * s_len + s] = acc;
        }
    }
    let mut grad = vec![0.0; t * v];
    for step in 0..t {
        let mut occupancy = vec![neg; v];
        for s in 0..s_len {
            let ab = alpha[step * s_len + s] + beta[step * s_len + s];
            occupancy[ext[s]] = log_sum_exp(occupancy[ext[s]], ab);
        }
        for c in 0..v {
            let y = logp[step * v + c].exp();
            grad[step * v + c] = y - (occupancy[c] - log_p).exp();
        }
    }
    (-log_p, grad)
}
