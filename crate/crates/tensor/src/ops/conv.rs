//! 2-D convolution over `NCHW` tensors via im2col and gemm.

use crate::gemm::{gemm, MatRef};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dSpec {
    /// `(vertical, horizontal)`.
    pub stride: (usize, usize),
    /// Zero padding, `(vertical, horizontal)`.
    pub padding: (usize, usize),
}

impl Conv2dSpec {
    pub fn new(stride: (usize, usize), padding: (usize, usize)) -> Self {
        Conv2dSpec { stride, padding }
    }

    /// Stride 1, padding `k / 2`: keeps the spatial size for odd kernels.
    pub fn same(kernel: usize) -> Self {
        Conv2dSpec::new((1, 1), (kernel / 2, kernel / 2))
    }

    pub fn output_size(&self, h: usize, w: usize, kh: usize, kw: usize) -> (usize, usize) {
        let ho = (h + 2 * self.padding.0 - kh) / self.stride.0 + 1;
        let wo = (w + 2 * self.padding.1 - kw) / self.stride.1 + 1;
        (ho, wo)
    }
}

#[derive(Clone, Copy)]
struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    spec: Conv2dSpec,
}

impl Geometry {
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.spec.stride == (1, 1) && self.spec.padding == (0, 0)
    }

    fn col_rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.ho * self.wo
    }
}

fn im2col(x: &[f64], g: &Geometry, cols: &mut [f64]) {
    let (sh, sw) = g.spec.stride;
    let (ph, pw) = g.spec.padding;
    let n = g.col_cols();
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * n..(row + 1) * n];
                for oy in 0..g.ho {
                    let iy = (oy * sh + ki) as isize - ph as isize;
                    let line = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * sw + kj) as isize - pw as isize;
                        *v = if ix < 0 || ix >= g.w as isize { 0.0 } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], g: &Geometry, x: &mut [f64]) {
    let (sh, sw) = g.spec.stride;
    let (ph, pw) = g.spec.padding;
    let n = g.col_cols();
    for c in 0..g.c {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..g.ho {
                    let iy = (oy * sh + ki) as isize - ph as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.wo {
                        let ix = (ox * sw + kj) as isize - pw as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

impl Graph {
    /// `x: [N, C, H, W]`, `weight: [O, C, kh, kw]`, `bias: [O]`.
    pub fn conv2d(&mut self, x: Var, weight: Var, bias: Option<Var>, spec: Conv2dSpec) -> Var {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(weight).to_vec();
        assert_eq!(xs.len(), 4, "conv2d input must be NCHW, got {xs:?}");
        assert_eq!(ws.len(), 4, "conv2d weight must be OCHW, got {ws:?}");
        assert_eq!(xs[1], ws[1], "conv2d input has {} channels, weight expects {}", xs[1], ws[1]);
        let (n, o) = (xs[0], ws[0]);
        assert!(
            xs[2] + 2 * spec.padding.0 >= ws[2] && xs[3] + 2 * spec.padding.1 >= ws[3],
            "conv2d kernel {ws:?} larger than padded input {xs:?}"
        );
        let (ho, wo) = spec.output_size(xs[2], xs[3], ws[2], ws[3]);
        let geo = Geometry {
            c: xs[1],
            h: xs[2],
            w: xs[3],
            kh: ws[2],
            kw: ws[3],
            ho,
            wo,
            spec,
        };
        let (rows, ncols) = (geo.col_rows(), geo.col_cols());
        let in_plane = geo.c * geo.h * geo.w;
        let keep_cols = self.needs_grad(&[weight]) && !geo.is_pointwise();
        let mut saved_cols: Vec<f64> = if keep_cols { vec![0.0; n * rows * ncols] } else { Vec::new() };
        let mut scratch = if geo.is_pointwise() { Vec::new() } else { vec![0.0; rows * ncols] };
        let mut out = vec![0.0; n * o * ncols];
        {
            let xd = self.value(x).data();
            let wd = self.value(weight).data();
            for b in 0..n {
                let xb = &xd[b * in_plane..(b + 1) * in_plane];
                let cols: &[f64] = if geo.is_pointwise() {
                    xb
                } else {
                    let buf = if keep_cols {
                        &mut saved_cols[b * rows * ncols..(b + 1) * rows * ncols]
                    } else {
                        &mut scratch[..]
                    };
                    im2col(xb, &geo, buf);
                    buf
                };
                gemm(
                    1.0,
                    MatRef::new(wd, o, rows),
                    MatRef::new(cols, rows, ncols),
                    0.0,
                    &mut out[b * o * ncols..(b + 1) * o * ncols],
                );
            }
        }
        let conv = self.custom(&[x, weight], Tensor::new(&[n, o, ho, wo], out), move |a| {
            let g = a.grad.data();
            let xd = a.inputs[0].data();
            let wd = a.inputs[1].data();
            let mut gw = vec![0.0; o * rows];
            let mut gx = vec![0.0; n * in_plane];
            let mut gcols = vec![0.0; rows * ncols];
            for b in 0..n {
                let gb = MatRef::new(&g[b * o * ncols..(b + 1) * o * ncols], o, ncols);
                let cols = if geo.is_pointwise() {
                    Some(&xd[b * in_plane..(b + 1) * in_plane])
                } else if keep_cols {
                    Some(&saved_cols[b * rows * ncols..(b + 1) * rows * ncols])
                } else {
                    None
                };
                if let Some(cols) = cols {
                    gemm(1.0, gb, MatRef::new(cols, rows, ncols).t(), 1.0, &mut gw);
                }
                if geo.is_pointwise() {
                    gemm(1.0, MatRef::new(wd, o, rows).t(), gb, 0.0, &mut gx[b * in_plane..(b + 1) * in_plane]);
                } else {
                    gemm(1.0, MatRef::new(wd, o, rows).t(), gb, 0.0, &mut gcols);
                    col2im(&gcols, &geo, &mut gx[b * in_plane..(b + 1) * in_plane]);
                }
            }
            vec![
                Some(Tensor::new(a.inputs[0].shape(), gx)),
                Some(Tensor::new(a.inputs[1].shape(), gw)),
            ]
        });
        match bias {
            Some(b) => self.add_bias(conv, b, 1),
            None => conv,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop convolution.
    fn naive(x: &Tensor, w: &Tensor, spec: Conv2dSpec) -> Tensor {
        let (n, c, h, wd) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
        let (o, kh, kw) = (w.dim(0), w.dim(2), w.dim(3));
        let (ho, wo) = spec.output_size(h, wd, kh, kw);
        let mut out = vec![0.0; n * o * ho * wo];
        for b in 0..n {
            for oc in 0..o {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut s = 0.0;
                        for ic in 0..c {
                            for ki in 0..kh {
                                for kj in 0..kw {
                                    let iy = (oy * spec.stride.0 + ki) as isize - spec.padding.0 as isize;
                                    let ix = (ox * spec.stride.1 + kj) as isize - spec.padding.1 as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                        s += x.data()[((b * c + ic) * h + iy as usize) * wd + ix as usize]
                                            * w.data()[((oc * c + ic) * kh + ki) * kw + kj];
                                    }
                                }
                            }
                        }
                        out[((b * o + oc) * ho + oy) * wo + ox] = s;
                    }
                }
            }
        }
        Tensor::new(&[n, o, ho, wo], out)
    }

    #[test]
    fn matches_naive_loops() {
        let x = Tensor::new(&[2, 3, 5, 6], (0..180).map(|v| ((v * 37) % 11) as f64 - 5.0).collect());
        let w = Tensor::new(&[4, 3, 3, 3], (0..108).map(|v| ((v * 13) % 7) as f64 - 3.0).collect());
        for spec in [
            Conv2dSpec::same(3),
            Conv2dSpec::new((2, 1), (1, 1)),
            Conv2dSpec::new((2, 2), (0, 1)),
        ] {
            let mut g = Graph::new();
            let xv = g.constant(x.clone());
            let wv = g.constant(w.clone());
            let y = g.conv2d(xv, wv, None, spec);
            assert_eq!(g.value(y), &naive(&x, &w, spec), "{spec:?}");
        }
    }

    #[test]
    fn pointwise_matches_naive() {
        let x = Tensor::new(&[1, 2, 2, 3], (0..12).map(|v| v as f64).collect());
        let w = Tensor::new(&[3, 2, 1, 1], vec![1.0, 0.0, 0.0, 1.0, 1.0, -1.0]);
        let spec = Conv2dSpec::new((1, 1), (0, 0));
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let wv = g.constant(w.clone());
        let y = g.conv2d(xv, wv, None, spec);
        assert_eq!(g.value(y), &naive(&x, &w, spec));
    }
}
