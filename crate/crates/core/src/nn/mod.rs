//! Minimal neural building blocks shared by the MADE and Mask-SA scorers.
//!
//! Everything runs on `f64` with hand-written backward passes. Layers keep
//! parameters in plain row-major buffers and expose them through
//! [`Parameters`] so the optimiser, gradient checker and checkpoint code can
//! walk any model uniformly.

pub mod activation;
pub mod attention;
pub mod dense;
pub mod gradcheck;
pub mod init;
pub mod matrix;
pub mod norm;
pub mod optim;

pub use activation::{log_sigmoid, log_softmax, relu, sigmoid, softmax};
pub use attention::{AttentionCache, MultiHeadAttention};
pub use dense::{DenseLayer, Mask};
pub use gradcheck::{grad_check, GradCheckOptions};
pub use init::{seeded_rng, ModelRng};
pub use matrix::Matrix;
pub use norm::{LayerNorm, LayerNormCache};
pub use optim::Adam;

/// Uniform access to the trainable tensors of a model, in a fixed order.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// A copy with every parameter set to zero; used as a gradient accumulator.
    fn zeros_like(&self) -> Self
    where
        Self: Clone,
    {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    fn fill(&mut self, value: f64) {
        for t in self.tensors_mut() {
            t.fill(value);
        }
    }

    /// `self += scale * other`, tensor by tensor.
    fn add_scaled(&mut self, other: &Self, scale: f64) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}
