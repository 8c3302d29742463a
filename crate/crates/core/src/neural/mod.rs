//! Fixed-menu neural layers with hand-written reverse-mode gradients.
//!
//! Activations are laid out channel-major: a `ch × T` feature map is a flat
//! slice where channel `c` occupies `[c·T, (c+1)·T)`.

mod checkpoint;
mod conv;
mod dense;
mod gradcheck;
mod loss;
mod optim;
mod pool;
mod tensor;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use conv::DilatedConv1d;
pub use dense::Dense;
pub use gradcheck::{central_difference, max_relative_error, relative_error, GRADCHECK_FLOOR};
pub use loss::{cross_entropy, relu, relu_backward, softmax, softmax_cross_entropy_backward};
pub use optim::{Adam, AdamConfig};
pub use pool::{global_max_pool, global_max_pool_backward, MaxPool};
pub use tensor::Tensor;

use crate::scalar::Scalar;

/// A model exposing its parameter tensors in a fixed, named order.
pub trait Parameterized<S: Scalar> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)>;
    fn params_mut(&mut self) -> Vec<&mut Tensor<S>>;

    /// Total number of scalar parameters.
    fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }
}

/// Kaiming-uniform bound `sqrt(6 / fan_in)`.
pub(crate) fn kaiming_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}
