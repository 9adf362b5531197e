//! Minimal reverse-mode differentiation over dense `f64` tensors.

mod adam;
mod gradcheck;
pub(crate) mod kernels;
mod params;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckReport};
pub use kernels::{sigmoid, softmax_in_place};
pub use params::{Init, ParamSet};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
