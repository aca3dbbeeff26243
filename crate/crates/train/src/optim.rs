//! Stochastic gradient descent with momentum and L2 weight decay, and Adam
//! with decoupled weight decay.

use std::collections::BTreeMap;

use textseek_model::ParameterStore;
use textseek_tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    /// Rescale gradients whose global norm exceeds this (0 disables).
    pub clip_norm: f64,
    velocity: BTreeMap<String, Tensor>,
}

impl Sgd {
    pub fn new(momentum: f64, weight_decay: f64, clip_norm: f64) -> Self {
        Sgd {
            momentum,
            weight_decay,
            clip_norm,
            velocity: BTreeMap::new(),
        }
    }

    /// Applies one update and returns the gradient norm before clipping.
    ///
    /// `v <- momentum * v + (g + weight_decay * p)`, `p <- p - lr * v`.
    /// Parameters without a gradient still decay.
    pub fn step(&mut self, params: &mut ParameterStore, grads: &BTreeMap<String, Tensor>, lr: f64) -> f64 {
        let norm = global_norm(grads);
        let scale = clip_scale(norm, self.clip_norm);
        for (name, p) in params.iter_mut() {
            let v = self
                .velocity
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(p.shape()));
            let g = grads.get(name).map(Tensor::data);
            let pd = p.data_mut();
            for (i, vi) in v.data_mut().iter_mut().enumerate() {
                let gi = g.map_or(0.0, |g| g[i] * scale) + self.weight_decay * pd[i];
                *vi = self.momentum * *vi + gi;
                pd[i] -= lr * *vi;
            }
        }
        norm
    }
}

fn global_norm(grads: &BTreeMap<String, Tensor>) -> f64 {
    grads.values().map(|g| g.data().iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt()
}

fn clip_scale(norm: f64, clip: f64) -> f64 {
    if clip > 0.0 && norm > clip {
        clip / norm
    } else {
        1.0
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    steps: i32,
    moments: BTreeMap<String, (Tensor, Tensor)>,
}

impl Adam {
    pub fn new(beta1: f64, weight_decay: f64, clip_norm: f64) -> Self {
        Adam {
            beta1,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            clip_norm,
            steps: 0,
            moments: BTreeMap::new(),
        }
    }

    /// One bias-corrected update; weight decay shrinks parameters directly
    /// by `lr * weight_decay`. Returns the gradient norm before clipping.
    pub fn step(&mut self, params: &mut ParameterStore, grads: &BTreeMap<String, Tensor>, lr: f64) -> f64 {
        let norm = global_norm(grads);
        let scale = clip_scale(norm, self.clip_norm);
        self.steps += 1;
        let c1 = 1.0 - self.beta1.powi(self.steps);
        let c2 = 1.0 - self.beta2.powi(self.steps);
        for (name, p) in params.iter_mut() {
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (Tensor::zeros(p.shape()), Tensor::zeros(p.shape())));
            let g = grads.get(name).map(Tensor::data);
            let pd = p.data_mut();
            let (md, vd) = (m.data_mut(), v.data_mut());
            for i in 0..pd.len() {
                let gi = g.map_or(0.0, |g| g[i] * scale);
                md[i] = self.beta1 * md[i] + (1.0 - self.beta1) * gi;
                vd[i] = self.beta2 * vd[i] + (1.0 - self.beta2) * gi * gi;
                let update = (md[i] / c1) / ((vd[i] / c2).sqrt() + self.eps);
                pd[i] -= lr * (update + self.weight_decay * pd[i]);
            }
        }
        norm
    }
}

/// Either optimizer behind one interface.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd(Sgd),
    Adam(Adam),
}

impl Optimizer {
    pub fn step(&mut self, params: &mut ParameterStore, grads: &BTreeMap<String, Tensor>, lr: f64) -> f64 {
        match self {
            Optimizer::Sgd(o) => o.step(params, grads, lr),
            Optimizer::Adam(o) => o.step(params, grads, lr),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_descent_and_momentum() {
        let mut p = ParameterStore::default();
        p.insert("w", Tensor::new(&[2], vec![1.0, -2.0]));
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), Tensor::new(&[2], vec![0.5, 0.5]));
        let mut opt = Sgd::new(0.9, 0.0, 0.0);
        opt.step(&mut p, &grads, 0.1);
        assert_eq!(p.get("w").unwrap().data(), &[0.95, -2.05]);
        opt.step(&mut p, &grads, 0.1);
        // velocity 0.9 * 0.5 + 0.5 = 0.95
        let w = p.get("w").unwrap().data();
        assert!((w[0] - 0.855).abs() < 1e-12 && (w[1] + 2.145).abs() < 1e-12);
    }

    #[test]
    fn decay_and_clip() {
        let mut p = ParameterStore::default();
        p.insert("w", Tensor::new(&[1], vec![2.0]));
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), Tensor::new(&[1], vec![10.0]));
        let mut opt = Sgd::new(0.0, 0.5, 1.0);
        let n = opt.step(&mut p, &grads, 0.1);
        assert_eq!(n, 10.0);
        // clipped gradient 1.0 plus decay 0.5 * 2.0
        assert!((p.get("w").unwrap().data()[0] - 1.8).abs() < 1e-12);
    }
}
