//! Central finite-difference checks of analytic gradients.

use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheck {
    /// Per input: `|analytic - numeric| / max(|analytic|, |numeric|)` in
    /// Euclidean norm, or the absolute difference when both are below 1e-10.
    pub relative_errors: Vec<f64>,
    pub analytic: Vec<Tensor>,
    pub numeric: Vec<Tensor>,
}

impl GradCheck {
    pub fn max_relative_error(&self) -> f64 {
        self.relative_errors.iter().cloned().fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    let diff = analytic.zip_map(numeric, |a, b| a - b).norm();
    let scale = analytic.norm().max(numeric.norm());
    if scale < 1e-10 {
        diff
    } else {
        diff / scale
    }
}

/// Compares the gradient of the scalar `f(graph, inputs)` with respect to
/// every input against central differences with step `eps`.
pub fn check_gradients<F>(inputs: &[Tensor], eps: f64, f: F) -> GradCheck
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let eval = |values: &[Tensor]| {
        let mut g = Graph::inference();
        let vars: Vec<Var> = values.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars);
        g.value(out).item()
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = f(&mut g, &vars);
    let grads = g.backward(loss);
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut numeric = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut num = vec![0.0; inputs[i].numel()];
        for (j, slot) in num.iter_mut().enumerate() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + eps;
            let plus = eval(&work);
            work[i].data_mut()[j] = orig - eps;
            let minus = eval(&work);
            work[i].data_mut()[j] = orig;
            *slot = (plus - minus) / (2.0 * eps);
        }
        numeric.push(Tensor::new(inputs[i].shape(), num));
    }
    let relative_errors = analytic.iter().zip(&numeric).map(|(a, n)| relative_error(a, n)).collect();
    GradCheck {
        relative_errors,
        analytic,
        numeric,
    }
}
