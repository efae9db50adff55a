//! Minimal reverse-mode differentiation for small convolutional models.
//!
//! A [`Graph`] records operations as they run; [`Graph::backward`] walks the
//! tape once in reverse and returns gradients for the leaves. Models are
//! generic over [`Real`] so the same graph runs in `f32` for training and in
//! `f64` for [`GradCheck`].

mod check;
mod conv;
mod error;
mod graph;
mod optim;
mod params;
mod real;
mod tensor;

pub use check::{GradCheck, GradCheckReport};
pub use error::{AutodiffError, Result};
pub use graph::{CustomBackward, Gradients, Graph, Var};
pub use optim::{clip_global_norm, AdamState};
pub use params::ParamSet;
pub use real::Real;
pub use tensor::Tensor;
