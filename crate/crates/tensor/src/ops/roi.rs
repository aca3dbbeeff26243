//! RoI-Align: bilinear pooling of boxes to a fixed grid.

use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// A box in feature-map coordinates (already divided by the stride), where
/// cell `(y, x)` is centred at `(y, x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiBox {
    pub batch: usize,
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

/// Bilinear taps `(plane offset, weight)` for one sample point, following
/// the usual convention: points more than one cell outside contribute
/// nothing, points just outside are clamped to the border.
fn taps(y: f64, x: f64, h: usize, w: usize, out: &mut Vec<(usize, f64)>, weight: f64) {
    if y < -1.0 || y > h as f64 || x < -1.0 || x > w as f64 {
        return;
    }
    let y = y.max(0.0);
    let x = x.max(0.0);
    let (mut y0, mut x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1);
    let (mut ly, mut lx) = (y - y0 as f64, x - x0 as f64);
    if y0 >= h - 1 {
        y0 = h - 1;
        y1 = h - 1;
        ly = 0.0;
    } else {
        y1 = y0 + 1;
    }
    if x0 >= w - 1 {
        x0 = w - 1;
        x1 = w - 1;
        lx = 0.0;
    } else {
        x1 = x0 + 1;
    }
    let (hy, hx) = (1.0 - ly, 1.0 - lx);
    out.push((y0 * w + x0, weight * hy * hx));
    out.push((y0 * w + x1, weight * hy * lx));
    out.push((y1 * w + x0, weight * ly * hx));
    out.push((y1 * w + x1, weight * ly * lx));
}

impl Graph {
    /// Pools `features: [B, C, H, W]` inside each box to `[K, C, out_h, out_w]`,
    /// averaging `sampling x sampling` bilinear samples per bin.
    pub fn roi_align(&mut self, features: Var, boxes: &[RoiBox], out_h: usize, out_w: usize, sampling: usize) -> Var {
        let fs = self.shape(features).to_vec();
        assert_eq!(fs.len(), 4, "roi_align expects NCHW features");
        assert!(sampling >= 1 && out_h >= 1 && out_w >= 1);
        let (nb, c, h, w) = (fs[0], fs[1], fs[2], fs[3]);
        let bins = out_h * out_w;
        // Per box and bin: the flattened taps and where they start.
        let mut tap_list: Vec<(usize, f64)> = Vec::new();
        let mut tap_start = Vec::with_capacity(boxes.len() * bins + 1);
        let norm = 1.0 / (sampling * sampling) as f64;
        for r in boxes {
            assert!(r.batch < nb, "box refers to batch item {} of {nb}", r.batch);
            assert!(r.x1 > r.x0 && r.y1 > r.y0, "degenerate RoI {r:?}");
            let bin_h = (r.y1 - r.y0) / out_h as f64;
            let bin_w = (r.x1 - r.x0) / out_w as f64;
            for py in 0..out_h {
                for px in 0..out_w {
                    tap_start.push(tap_list.len());
                    for iy in 0..sampling {
                        let y = r.y0 + (py as f64 + (iy as f64 + 0.5) / sampling as f64) * bin_h;
                        for ix in 0..sampling {
                            let x = r.x0 + (px as f64 + (ix as f64 + 0.5) / sampling as f64) * bin_w;
                            taps(y, x, h, w, &mut tap_list, norm);
                        }
                    }
                }
            }
        }
        tap_start.push(tap_list.len());
        let batch_of: Vec<usize> = boxes.iter().map(|r| r.batch).collect();
        let k = boxes.len();
        let plane = h * w;
        let src = self.value(features).data();
        let mut out = vec![0.0; k * c * bins];
        for (ri, &b) in batch_of.iter().enumerate() {
            for ch in 0..c {
                let fp = &src[(b * c + ch) * plane..(b * c + ch + 1) * plane];
                let dst = &mut out[(ri * c + ch) * bins..(ri * c + ch + 1) * bins];
                for (bin, d) in dst.iter_mut().enumerate() {
                    let s = tap_start[ri * bins + bin];
                    let e = tap_start[ri * bins + bin + 1];
                    *d = tap_list[s..e].iter().map(|&(off, wt)| wt * fp[off]).sum();
                }
            }
        }
        self.custom(&[features], Tensor::new(&[k, c, out_h, out_w], out), move |a| {
            let g = a.grad.data();
            let mut gf = vec![0.0; nb * c * plane];
            for (ri, &b) in batch_of.iter().enumerate() {
                for ch in 0..c {
                    let dst = &mut gf[(b * c + ch) * plane..(b * c + ch + 1) * plane];
                    let gs = &g[(ri * c + ch) * bins..(ri * c + ch + 1) * bins];
                    for (bin, &gv) in gs.iter().enumerate() {
                        let s = tap_start[ri * bins + bin];
                        let e = tap_start[ri * bins + bin + 1];
                        for &(off, wt) in &tap_list[s..e] {
                            dst[off] += wt * gv;
                        }
                    }
                }
            }
            vec![Some(Tensor::new(a.inputs[0].shape(), gf))]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(h: usize, w: usize) -> Tensor {
        Tensor::new(&[1, 1, h, w], (0..h * w).map(|v| (v * v % 17) as f64).collect())
    }

    #[test]
    fn aligned_box_reproduces_cells() {
        let f = grid(6, 8);
        let mut g = Graph::new();
        let fv = g.constant(f.clone());
        // cells x in [2, 6), y in [1, 3): bin centres land exactly on cell centres
        let r = RoiBox {
            batch: 0,
            x0: 1.5,
            y0: 0.5,
            x1: 5.5,
            y1: 2.5,
        };
        let out = g.roi_align(fv, &[r], 2, 4, 1);
        let expected: Vec<f64> = (1..3).flat_map(|y| (2..6).map(move |x| (y, x))).map(|(y, x)| f.data()[y * 8 + x]).collect();
        assert_eq!(g.value(out).data(), &expected[..]);
    }

    #[test]
    fn constant_map_pools_to_constant() {
        let mut g = Graph::new();
        let fv = g.constant(Tensor::full(&[2, 3, 5, 5], 0.75));
        let boxes = [
            RoiBox { batch: 1, x0: 0.2, y0: 0.1, x1: 3.7, y1: 2.9 },
            RoiBox { batch: 0, x0: 1.0, y0: 1.0, x1: 1.3, y1: 4.0 },
        ];
        let out = g.roi_align(fv, &boxes, 4, 6, 2);
        assert_eq!(g.shape(out), &[2, 3, 4, 6]);
        assert!(g.value(out).data().iter().all(|v| (v - 0.75).abs() < 1e-12));
    }

    #[test]
    fn no_boxes_gives_empty_leading_axis() {
        let mut g = Graph::new();
        let fv = g.constant(Tensor::full(&[1, 4, 5, 5], 1.0));
        let out = g.roi_align(fv, &[], 8, 12, 2);
        assert_eq!(g.shape(out), &[0, 4, 8, 12]);
    }
}
