//! Minimal reverse-mode autodiff stack sized for this model family:
//! conv/ReLU pyramids, AdaIN, LUT materialization, and Adam.

pub mod adam;
pub mod checkpoint;
pub mod conv;
pub mod gradcheck;
#[cfg(test)]
mod gradtests;
pub mod init;
pub mod lut_ops;
pub mod ops;
pub mod tensor;

pub use adam::Adam;
pub use tensor::Tensor;

/// A named trainable tensor. `frozen` keeps it out of optimizer updates
/// while still letting gradients flow through it.
#[derive(Clone)]
pub struct Parameter {
    pub tensor: Tensor,
    pub name: String,
    pub frozen: bool,
}

impl Parameter {
    pub fn new(tensor: Tensor, name: impl Into<String>) -> Parameter {
        tensor.set_requires_grad(true);
        Parameter {
            tensor,
            name: name.into(),
            frozen: false,
        }
    }
}
