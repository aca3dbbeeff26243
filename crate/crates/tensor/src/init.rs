//! Parameter initializers.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::tensor::Tensor;

/// He-normal: `N(0, 2 / fan_in)`, suited to layers followed by ReLU.
pub fn he_normal<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    let std = (2.0 / fan_in.max(1) as f64).sqrt();
    normal(shape, std, rng)
}

pub fn normal<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Tensor {
    let dist = Normal::new(0.0, std).expect("finite standard deviation");
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| dist.sample(rng)).collect())
}

/// `U(-bound, bound)`.
pub fn uniform<R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Tensor {
    let dist = Uniform::new_inclusive(-bound, bound);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| dist.sample(rng)).collect())
}

/// Uniform with bound `1 / sqrt(fan_in)`, the customary default for linear
/// and recurrent layers.
pub fn fan_in_uniform<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    uniform(shape, 1.0 / (fan_in.max(1) as f64).sqrt(), rng)
}
