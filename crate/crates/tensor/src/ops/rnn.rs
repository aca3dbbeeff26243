//! Fused single-direction LSTM with hand-written backpropagation through time.
//!
//! Gate order in the stacked weights is input, forget, cell, output.

use crate::gemm::{gemm, MatRef};
use crate::graph::{Graph, Var};
use crate::ops::basic::sigmoid;
use crate::tensor::Tensor;

impl Graph {
    /// `x: [B, T, I]`, `w_ih: [4H, I]`, `w_hh: [4H, H]`, `bias: [4H]`;
    /// returns hidden states `[B, T, H]`. With `reverse` the sequence is
    /// consumed from the last step, and output step `t` still aligns with
    /// input step `t`. Initial hidden and cell states are zero.
    pub fn lstm(&mut self, x: Var, w_ih: Var, w_hh: Var, bias: Var, reverse: bool) -> Var {
        let xs = self.shape(x).to_vec();
        assert_eq!(xs.len(), 3, "lstm input must be [B, T, I], got {xs:?}");
        let (b, t, i) = (xs[0], xs[1], xs[2]);
        let g4 = self.shape(w_ih)[0];
        assert_eq!(g4 % 4, 0, "lstm input weight rows must be 4H");
        let h = g4 / 4;
        assert_eq!(self.shape(w_ih), &[g4, i], "lstm input weight shape");
        assert_eq!(self.shape(w_hh), &[g4, h], "lstm recurrent weight shape");
        assert_eq!(self.value(bias).numel(), g4, "lstm bias length");

        // Pre-activations from the input for every (b, t) row at once.
        let mut pre = vec![0.0; b * t * g4];
        gemm(
            1.0,
            MatRef::new(self.value(x).data(), b * t, i),
            MatRef::new(self.value(w_ih).data(), g4, i).t(),
            0.0,
            &mut pre,
        );
        let bias_v = self.value(bias).data().to_vec();
        let whh = self.value(w_hh).data().to_vec();

        // Saved per (b, t): activated gates, cell state.
        let mut gates = vec![0.0; b * t * g4];
        let mut cells = vec![0.0; b * t * h];
        let mut hidden = vec![0.0; b * t * h];
        let mut h_prev = vec![0.0; b * h];
        let mut c_prev = vec![0.0; b * h];
        let mut step_pre = vec![0.0; b * g4];
        let order: Vec<usize> = if reverse { (0..t).rev().collect() } else { (0..t).collect() };
        for &step in &order {
            for bi in 0..b {
                let src = &pre[(bi * t + step) * g4..(bi * t + step + 1) * g4];
                for (k, dst) in step_pre[bi * g4..(bi + 1) * g4].iter_mut().enumerate() {
                    *dst = src[k] + bias_v[k];
                }
            }
            gemm(
                1.0,
                MatRef::new(&h_prev, b, h),
                MatRef::new(&whh, g4, h).t(),
                1.0,
                &mut step_pre,
            );
            for bi in 0..b {
                let row = (bi * t + step) * g4;
                let a = &step_pre[bi * g4..(bi + 1) * g4];
                for k in 0..h {
                    let ig = sigmoid(a[k]);
                    let fg = sigmoid(a[h + k]);
                    let gg = a[2 * h + k].tanh();
                    let og = sigmoid(a[3 * h + k]);
                    let c = fg * c_prev[bi * h + k] + ig * gg;
                    let hv = og * c.tanh();
                    gates[row + k] = ig;
                    gates[row + h + k] = fg;
                    gates[row + 2 * h + k] = gg;
                    gates[row + 3 * h + k] = og;
                    cells[(bi * t + step) * h + k] = c;
                    hidden[(bi * t + step) * h + k] = hv;
                    c_prev[bi * h + k] = c;
                    h_prev[bi * h + k] = hv;
                }
            }
        }

        let value = Tensor::new(&[b, t, h], hidden.clone());
        let keep = self.needs_grad(&[x, w_ih, w_hh, bias]);
        let (gates, cells, hidden) = if keep { (gates, cells, hidden) } else { (Vec::new(), Vec::new(), Vec::new()) };
        self.custom(&[x, w_ih, w_hh, bias], value, move |a| {
            let gout = a.grad.data();
            let whh = a.inputs[2].data();
            let mut d_pre = vec![0.0; b * t * g4];
            let mut dh_next = vec![0.0; b * h];
            let mut dc_next = vec![0.0; b * h];
            let mut dw_hh = vec![0.0; g4 * h];
            let mut d_step = vec![0.0; b * g4];
            let mut h_before = vec![0.0; b * h];
            for (pos, &step) in order.iter().enumerate().rev() {
                let prev_step = if pos == 0 { None } else { Some(order[pos - 1]) };
                for bi in 0..b {
                    let row = (bi * t + step) * g4;
                    for k in 0..h {
                        let idx = (bi * t + step) * h + k;
                        let (ig, fg, gg, og) = (gates[row + k], gates[row + h + k], gates[row + 2 * h + k], gates[row + 3 * h + k]);
                        let c = cells[idx];
                        let c_before = prev_step.map_or(0.0, |p| cells[(bi * t + p) * h + k]);
                        h_before[bi * h + k] = prev_step.map_or(0.0, |p| hidden[(bi * t + p) * h + k]);
                        let tc = c.tanh();
                        let dh = gout[idx] + dh_next[bi * h + k];
                        let d_o = dh * tc;
                        let dc = dh * og * (1.0 - tc * tc) + dc_next[bi * h + k];
                        let di = dc * gg;
                        let dg = dc * ig;
                        let df = dc * c_before;
                        dc_next[bi * h + k] = dc * fg;
                        let ds = &mut d_step[bi * g4..(bi + 1) * g4];
                        ds[k] = di * ig * (1.0 - ig);
                        ds[h + k] = df * fg * (1.0 - fg);
                        ds[2 * h + k] = dg * (1.0 - gg * gg);
                        ds[3 * h + k] = d_o * og * (1.0 - og);
                    }
                    d_pre[row..row + g4].copy_from_slice(&d_step[bi * g4..(bi + 1) * g4]);
                }
                // dh for the previous step and the recurrent weight gradient.
                gemm(1.0, MatRef::new(&d_step, b, g4), MatRef::new(whh, g4, h), 0.0, &mut dh_next);
                if prev_step.is_some() {
                    gemm(1.0, MatRef::new(&d_step, b, g4).t(), MatRef::new(&h_before, b, h), 1.0, &mut dw_hh);
                }
            }
            let mut dx = vec![0.0; b * t * i];
            gemm(1.0, MatRef::new(&d_pre, b * t, g4), MatRef::new(a.inputs[1].data(), g4, i), 0.0, &mut dx);
            let mut dw_ih = vec![0.0; g4 * i];
            gemm(
                1.0,
                MatRef::new(&d_pre, b * t, g4).t(),
                MatRef::new(a.inputs[0].data(), b * t, i),
                0.0,
                &mut dw_ih,
            );
            let mut db = vec![0.0; g4];
            for row in d_pre.chunks_exact(g4) {
                for (acc, v) in db.iter_mut().zip(row) {
                    *acc += v;
                }
            }
            vec![
                Some(Tensor::new(&[b, t, i], dx)),
                Some(Tensor::new(&[g4, i], dw_ih)),
                Some(Tensor::new(&[g4, h], dw_hh)),
                Some(Tensor::new(&[g4], db)),
            ]
        })
    }
}
