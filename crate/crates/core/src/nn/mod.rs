//! Feedforward network engine: dense layers, LeakyReLU, batch normalization,
//! exact backpropagation, Adam and finite-difference gradient checking.
//!
//! Layers are always `Linear → [BatchNorm] → activation`. Everything is `f64`.

mod adam;
mod gradcheck;
mod layer;
mod matrix;
mod network;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{check_network, gradient_check, relative_error, GradCheckConfig, GradCheckReport};
pub use layer::{
    leaky_relu, sigmoid, Activation, BatchNorm, BnCache, LayerSpec, Mode, BN_EPSILON, BN_MOMENTUM,
    DEFAULT_LEAKY_SLOPE,
};
pub use matrix::Matrix;
pub use network::{init_network, Forward, Gradients, Layer, LayerCache, Network};

/// A model whose trainable parameters can be enumerated as flat tensors.
///
/// The order of `parameters`, `parameters_mut` and `parameter_layers` is
/// identical, and gradient vectors are expected in the same order.
pub trait Parameterized {
    fn parameters(&self) -> Vec<&[f64]>;
    fn parameters_mut(&mut self) -> Vec<&mut [f64]>;
    /// Owning layer of each tensor, used to sample checks per layer.
    fn parameter_layers(&self) -> Vec<usize>;

    fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }
}
