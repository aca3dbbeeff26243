use crate::graph::{Graph, Var};
use crate::tensor::Tensor;
use crate::TensorError;

impl Graph {
    /// Scales every row of a `[R, D]` matrix to unit Euclidean length.
    pub fn l2_normalize_rows(&mut self, x: Var) -> Result<Var, TensorError> {
        let shape = self.shape(x).to_vec();
        assert_eq!(shape.len(), 2, "l2_normalize_rows expects [R, D]");
        let (r, d) = (shape[0], shape[1]);
        let src = self.value(x).data();
        let mut norms = Vec::with_capacity(r);
        let mut out = Vec::with_capacity(r * d);
        for (i, row) in src.chunks_exact(d.max(1)).take(r).enumerate() {
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n == 0.0 || !n.is_finite() {
                return Err(TensorError::ZeroNorm(i));
            }
            norms.push(n);
            out.extend(row.iter().map(|v| v / n));
        }
        Ok(self.custom(&[x], Tensor::new(&shape, out), move |a| {
            let g = a.grad.data();
            let y = a.output.data();
            let mut gx = vec![0.0; r * d];
            for i in 0..r {
                let (gr, yr) = (&g[i * d..(i + 1) * d], &y[i * d..(i + 1) * d]);
                let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                for j in 0..d {
                    gx[i * d + j] = (gr[j] - yr[j] * dot) / norms[i];
                }
            }
            vec![Some(Tensor::new(&[r, d], gx))]
        }))
    }

    /// Maximum over the last axis of a `[R, C]` matrix, `[R]`. The gradient
    /// goes to the first maximal entry of each row.
    pub fn max_rows(&mut self, x: Var) -> Var {
        let shape = self.shape(x).to_vec();
        assert_eq!(shape.len(), 2, "max_rows expects [R, C]");
        let (r, c) = (shape[0], shape[1]);
        assert!(c > 0, "max over an empty row");
        let src = self.value(x).data();
        let mut arg = Vec::with_capacity(r);
        let mut out = Vec::with_capacity(r);
        for row in src.chunks_exact(c) {
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            arg.push(best);
            out.push(row[best]);
        }
        self.custom(&[x], Tensor::new(&[r], out), move |a| {
            let mut gx = vec![0.0; r * c];
            for (i, (&j, g)) in arg.iter().zip(a.grad.data()).enumerate() {
                gx[i * c + j] = *g;
            }
            vec![Some(Tensor::new(&[r, c], gx))]
        })
    }

    /// Elementwise smooth-L1 with threshold `beta`: `0.5 x^2 / beta` inside,
    /// `|x| - 0.5 beta` outside.
    pub fn smooth_l1(&mut self, x: Var, beta: f64) -> Var {
        assert!(beta > 0.0);
        self.unary_fn(
            x,
            move |v| {
                if v.abs() < beta {
                    0.5 * v * v / beta
                } else {
                    v.abs() - 0.5 * beta
                }
            },
            move |v, _| if v.abs() < beta { v / beta } else { v.signum() },
        )
    }

    /// Natural log; inputs must be positive.
    pub fn ln(&mut self, x: Var) -> Var {
        self.unary_fn(x, f64::ln, |v, _| 1.0 / v)
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary_fn(x, f64::sqrt, |_, y| 0.5 / y)
    }

    /// Group normalization of `[N, C, ...]`: each sample's channels are split
    /// into `groups` contiguous groups, every group is standardized over its
    /// channels and positions, then scaled by `gamma` and shifted by `beta`
    /// (both `[C]`).
    pub fn group_norm(&mut self, x: Var, groups: usize, gamma: Var, beta: Var, eps: f64) -> Var {
        let shape = self.shape(x).to_vec();
        assert!(shape.len() >= 2, "group_norm expects [N, C, ...]");
        let (n, c) = (shape[0], shape[1]);
        assert!(groups > 0 && c % groups == 0, "{c} channels do not split into {groups} groups");
        assert_eq!(self.shape(gamma), &[c]);
        assert_eq!(self.shape(beta), &[c]);
        let inner: usize = shape[2..].iter().product();
        let per = c / groups;
        let m = per * inner;
        let src = self.value(x).data();
        let gm = self.value(gamma).data().to_vec();
        let bt = self.value(beta).data();
        let mut xhat = vec![0.0; src.len()];
        let mut inv = vec![0.0; n * groups];
        let mut out = vec![0.0; src.len()];
        for s in 0..n * groups {
            let block = &src[s * m..(s + 1) * m];
            let mean = block.iter().sum::<f64>() / m as f64;
            let var = block.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
            let r = 1.0 / (var + eps).sqrt();
            inv[s] = r;
            for (k, v) in block.iter().enumerate() {
                let i = s * m + k;
                let ch = (s % groups) * per + k / inner;
                xhat[i] = (v - mean) * r;
                out[i] = xhat[i] * gm[ch] + bt[ch];
            }
        }
        self.custom(&[x, gamma, beta], Tensor::new(&shape, out), move |a| {
            let g = a.grad.data();
            let mut gx = vec![0.0; g.len()];
            let mut ggamma = vec![0.0; c];
            let mut gbeta = vec![0.0; c];
            let mut dxhat = vec![0.0; m];
            for s in 0..n * groups {
                let (mut sum, mut dot) = (0.0, 0.0);
                for k in 0..m {
                    let i = s * m + k;
                    let ch = (s % groups) * per + k / inner;
                    ggamma[ch] += g[i] * xhat[i];
                    gbeta[ch] += g[i];
                    dxhat[k] = g[i] * gm[ch];
                    sum += dxhat[k];
                    dot += dxhat[k] * xhat[i];
                }
                let scale = inv[s] / m as f64;
                for k in 0..m {
                    let i = s * m + k;
                    gx[i] = scale * (m as f64 * dxhat[k] - sum - xhat[i] * dot);
                }
            }
            vec![
                Some(Tensor::new(&shape, gx)),
                Some(Tensor::new(&[c], ggamma)),
                Some(Tensor::new(&[c], gbeta)),
            ]
        })
    }
}
