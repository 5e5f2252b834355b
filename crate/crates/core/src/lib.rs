//! Robust inversion of differentiable generators.
//!
//! Given an image `x` and a generator `G`, recover a latent `z` and a
//! corruption mask `M ∈ [0,1]` by minimizing
//! `L((1−M)⊙x, (1−M)⊙G(z)) + λ‖M‖₁`, optionally fine-tuning the
//! generator's parameters per image.

// `!(x >= 0.0)` deliberately rejects NaN along with negatives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adam;
pub mod autodiff;
pub mod corruption;
pub mod error;
pub mod generator;
pub mod metrics;
pub mod oracle;
pub mod pnm;
pub mod solver;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
