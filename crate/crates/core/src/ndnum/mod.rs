//! Dense tensors, reverse-mode differentiation and the Adam optimizer.

pub mod gradcheck;
mod graph;
mod optim;
mod tensor;

pub use graph::{reverse_grad, Gradients, Graph, Var};
pub use optim::{adam_step, AdamConfig, AdamState, CosineSchedule};
pub use tensor::{Tensor, LAYER_NORM_EPS};

use rand::Rng;

use crate::scalar::Scalar;

/// Inverted dropout mask: kept entries are scaled by `1 / (1 - rate)`.
pub fn dropout_mask<T: Scalar, R: Rng + ?Sized>(shape: &[usize], rate: f64, rng: &mut R) -> Tensor<T> {
    let keep = T::lit(1.0 / (1.0 - rate));
    Tensor::from_fn(shape.to_vec(), |_| if rng.random::<f64>() < rate { T::zero() } else { keep })
}
