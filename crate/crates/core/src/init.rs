//! Parameter initializers.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::tensor::Tensor;

/// `U(-bound, bound)` entries.
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], bound: f64) -> Tensor {
    if bound == 0.0 {
        return Tensor::zeros(shape);
    }
    let d = Uniform::new(-bound, bound);
    Tensor::from_fn(shape, |_| d.sample(rng))
}

/// Uniform with the `1/sqrt(fan_in)` bound used by common conv/linear layers.
pub fn fan_in_uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], fan_in: usize) -> Tensor {
    uniform(rng, shape, 1.0 / (fan_in as f64).sqrt())
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], mean: f64, std: f64) -> Tensor {
    let d = Normal::new(mean, std).expect("std must be finite and non-negative");
    Tensor::from_fn(shape, |_| d.sample(rng))
}
