//! Feedforward network engine: layers, losses, backpropagation, SGD.

mod activation;
pub mod checkpoint;
mod dense;
mod gradcheck;
mod loss;
mod network;
mod sgd;

pub use activation::{sigmoid, softmax_row, softplus, Activation};
pub use dense::{fc_forward, DenseLayer};
pub use gradcheck::{grad_check, BlockReport, GradCheckReport, ParamKind};
pub use loss::{
    loss_cross_entropy, loss_mse, loss_mse_grad, one_hot, validate_one_hot, LossKind, PROB_FLOOR,
};
pub use network::{Layer, LayerSpec, Network, NetworkSpec};
pub use sgd::{Sgd, SgdConfig};

use crate::tensor::Tensor;

/// Gradients of one parameterized layer, shaped like its weights and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub weights: Tensor,
    pub bias: Tensor,
}

/// Per-layer gradients; `None` for layers without parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<Option<ParamGrads>>,
}

impl GradientSet {
    pub fn iter_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flatten()
            .flat_map(|p| p.weights.data().iter().chain(p.bias.data()).copied())
    }

    pub fn max_abs(&self) -> f64 {
        self.iter_values().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Adds `other * scale` into `self`. Both sets must come from the same network.
    pub fn add_scaled(&mut self, other: &GradientSet, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some(a), Some(b)) = (a, b) {
                for (x, y) in a.weights.data_mut().iter_mut().zip(b.weights.data()) {
                    *x += scale * y;
                }
                for (x, y) in a.bias.data_mut().iter_mut().zip(b.bias.data()) {
                    *x += scale * y;
                }
            }
        }
    }
}
