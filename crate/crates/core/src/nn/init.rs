//! Deterministic weight initialization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::nn::tensor::Tensor;

/// Kaiming-uniform fill: U(-b, b) with b = sqrt(6 / fan_in).
pub fn kaiming_uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::leaf(data, shape)
}

/// Conv weight [O, C, kh, kw] with fan_in = C * kh * kw.
pub fn conv_weight(rng: &mut ChaCha8Rng, o: usize, c: usize, kh: usize, kw: usize) -> Tensor {
    kaiming_uniform(rng, &[o, c, kh, kw], c * kh * kw)
}

pub fn zeros_leaf(shape: &[usize]) -> Tensor {
    let t = Tensor::zeros(shape);
    t.set_requires_grad(true);
    t
}
