//! Elementwise math, reductions and layout ops.

use crate::graph::{Graph, Var};
use crate::tensor::{strides_of, Tensor};

/// `(outer, axis length, inner)` split of a shape around `axis`.
fn split_at_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn permute_tensor(t: &Tensor, axes: &[usize]) -> Tensor {
    let shape = t.shape();
    assert_eq!(axes.len(), shape.len(), "permutation rank mismatch");
    let new_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let src_strides = strides_of(shape);
    let perm_strides: Vec<usize> = axes.iter().map(|&a| src_strides[a]).collect();
    let n = t.numel();
    let mut out = Vec::with_capacity(n);
    let mut idx = vec![0usize; new_shape.len()];
    let src = t.data();
    let mut offset = 0usize;
    for _ in 0..n {
        out.push(src[offset]);
        for d in (0..new_shape.len()).rev() {
            idx[d] += 1;
            offset += perm_strides[d];
            if idx[d] < new_shape[d] {
                break;
            }
            offset -= perm_strides[d] * new_shape[d];
            idx[d] = 0;
        }
    }
    Tensor::new(&new_shape, out)
}

impl Graph {
    pub(crate) fn unary_fn(&mut self, x: Var, f: impl Fn(f64) -> f64, df: impl Fn(f64, f64) -> f64 + 'static) -> Var {
        let value = self.value(x).map(f);
        self.custom(&[x], value, move |a| {
            let g: Vec<f64> = a
                .grad
                .data()
                .iter()
                .zip(a.inputs[0].data())
                .zip(a.output.data())
                .map(|((&g, &x), &y)| g * df(x, y))
                .collect();
            vec![Some(Tensor::new(a.grad.shape(), g))]
        })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary_fn(x, |v| v.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary_fn(x, sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary_fn(x, f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary_fn(x, f64::exp, |_, y| y)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.unary_fn(x, |v| v * s, move |_, _| s)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.custom(&[a, b], value, |args| vec![Some(args.grad.clone()), Some(args.grad.clone())])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.custom(&[a, b], value, |args| vec![Some(args.grad.clone()), Some(args.grad.map(|g| -g))])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.custom(&[a, b], value, |args| {
            vec![
                Some(args.grad.zip_map(args.inputs[1], |g, y| g * y)),
                Some(args.grad.zip_map(args.inputs[0], |g, x| g * x)),
            ]
        })
    }

    /// Adds a 1-D `bias` broadcast along `axis` of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var, axis: usize) -> Var {
        let (outer, len, inner) = split_at_axis(self.shape(x), axis);
        assert_eq!(self.value(bias).numel(), len, "bias length differs from axis {axis}");
        let mut value = self.value(x).clone();
        {
            let b = self.value(bias).data().to_vec();
            let d = value.data_mut();
            for o in 0..outer {
                for (c, bc) in b.iter().enumerate() {
                    let start = (o * len + c) * inner;
                    for v in &mut d[start..start + inner] {
                        *v += bc;
                    }
                }
            }
        }
        self.custom(&[x, bias], value, move |args| {
            let g = args.grad.data();
            let mut gb = vec![0.0; len];
            for o in 0..outer {
                for (c, acc) in gb.iter_mut().enumerate() {
                    let start = (o * len + c) * inner;
                    *acc += g[start..start + inner].iter().sum::<f64>();
                }
            }
            vec![Some(args.grad.clone()), Some(Tensor::new(args.inputs[1].shape(), gb))]
        })
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.custom(&[x], value, |a| vec![Some(Tensor::full(a.inputs[0].shape(), a.grad.item()))])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel().max(1) as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Mean over `axis`, which is removed from the shape.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Var {
        let shape = self.shape(x).to_vec();
        let (outer, len, inner) = split_at_axis(&shape, axis);
        let src = self.value(x).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for c in 0..len {
                let s = &src[(o * len + c) * inner..(o * len + c + 1) * inner];
                for (acc, v) in out[o * inner..(o + 1) * inner].iter_mut().zip(s) {
                    *acc += v;
                }
            }
        }
        let inv = 1.0 / len as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        let mut new_shape = shape.clone();
        new_shape.remove(axis);
        self.custom(&[x], Tensor::new(&new_shape, out), move |a| {
            let g = a.grad.data();
            let mut gx = vec![0.0; outer * len * inner];
            for o in 0..outer {
                for c in 0..len {
                    let dst = &mut gx[(o * len + c) * inner..(o * len + c + 1) * inner];
                    for (d, v) in dst.iter_mut().zip(&g[o * inner..(o + 1) * inner]) {
                        *d = v * inv;
                    }
                }
            }
            vec![Some(Tensor::new(&shape, gx))]
        })
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let value = self.value(x).clone().reshape(shape);
        self.custom(&[x], value, |a| vec![Some(a.grad.clone().reshape(a.inputs[0].shape()))])
    }

    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Var {
        let value = permute_tensor(self.value(x), axes);
        let mut inverse = vec![0; axes.len()];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        self.custom(&[x], value, move |a| vec![Some(permute_tensor(a.grad, &inverse))])
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Var {
        assert!(!xs.is_empty(), "concat of nothing");
        let first = self.shape(xs[0]).to_vec();
        let lens: Vec<usize> = xs
            .iter()
            .map(|&v| {
                let s = self.shape(v);
                assert_eq!(s.len(), first.len(), "concat rank mismatch");
                for (d, (&a, &b)) in s.iter().zip(&first).enumerate() {
                    assert!(d == axis || a == b, "concat shapes {s:?} and {first:?} differ off axis {axis}");
                }
                s[axis]
            })
            .collect();
        let (outer, _, inner) = split_at_axis(&first, axis);
        let total: usize = lens.iter().sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (&v, &len) in xs.iter().zip(&lens) {
                let d = self.value(v).data();
                out.extend_from_slice(&d[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = first.clone();
        shape[axis] = total;
        self.custom(xs, Tensor::new(&shape, out), move |a| {
            let g = a.grad.data();
            let mut parts: Vec<Vec<f64>> = lens.iter().map(|&l| Vec::with_capacity(outer * l * inner)).collect();
            let mut offset = 0;
            for _ in 0..outer {
                for (p, &len) in parts.iter_mut().zip(&lens) {
                    p.extend_from_slice(&g[offset..offset + len * inner]);
                    offset += len * inner;
                }
            }
            parts
                .into_iter()
                .zip(&a.inputs)
                .map(|(p, x)| Some(Tensor::new(x.shape(), p)))
                .collect()
        })
    }

    /// Slice `[start, start + len)` of `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Var {
        let shape = self.shape(x).to_vec();
        let (outer, full, inner) = split_at_axis(&shape, axis);
        assert!(start + len <= full, "narrow [{start}, {}) out of {full}", start + len);
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            out.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut new_shape = shape.clone();
        new_shape[axis] = len;
        self.custom(&[x], Tensor::new(&new_shape, out), move |a| {
            let g = a.grad.data();
            let mut gx = vec![0.0; outer * full * inner];
            for o in 0..outer {
                let base = (o * full + start) * inner;
                gx[base..base + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(Tensor::new(&shape, gx))]
        })
    }

    /// Nearest-neighbour resize of `[N, C, H, W]` to `[N, C, out_h, out_w]`.
    pub fn upsample_nearest(&mut self, x: Var, out_h: usize, out_w: usize) -> Var {
        let shape = self.shape(x).to_vec();
        assert_eq!(shape.len(), 4, "upsample_nearest expects NCHW");
        let (planes, h, w) = (shape[0] * shape[1], shape[2], shape[3]);
        let rows: Vec<usize> = (0..out_h).map(|i| (i * h / out_h).min(h - 1)).collect();
        let cols: Vec<usize> = (0..out_w).map(|j| (j * w / out_w).min(w - 1)).collect();
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(planes * out_h * out_w);
        for p in 0..planes {
            for &r in &rows {
                for &c in &cols {
                    out.push(src[(p * h + r) * w + c]);
                }
            }
        }
        let out_shape = [shape[0], shape[1], out_h, out_w];
        self.custom(&[x], Tensor::new(&out_shape, out), move |a| {
            let g = a.grad.data();
            let mut gx = vec![0.0; planes * h * w];
            let mut k = 0;
            for p in 0..planes {
                for &r in &rows {
                    for &c in &cols {
                        gx[(p * h + r) * w + c] += g[k];
                        k += 1;
                    }
                }
            }
            vec![Some(Tensor::new(&shape, gx))]
        })
    }

    /// Rows of a `[V, D]` table, `[indices.len(), D]`.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Var {
        let shape = self.shape(table).to_vec();
        assert_eq!(shape.len(), 2, "gather_rows expects a 2-D table");
        let d = shape[1];
        let src = self.value(table).data();
        let mut out = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            assert!(i < shape[0], "row {i} out of {}", shape[0]);
            out.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        let indices = indices.to_vec();
        self.custom(&[table], Tensor::new(&[indices.len(), d], out), move |a| {
            let g = a.grad.data();
            let mut gt = vec![0.0; shape[0] * d];
            for (k, &i) in indices.iter().enumerate() {
                for (dst, v) in gt[i * d..(i + 1) * d].iter_mut().zip(&g[k * d..(k + 1) * d]) {
                    *dst += v;
                }
            }
            vec![Some(Tensor::new(&shape, gt))]
        })
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
