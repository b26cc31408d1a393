//! Dense `f64` arrays, a recording tape for reverse-mode gradients, and Adam.

mod adam;
mod kernels;
mod store;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use store::{GradientSet, ParamStore};
pub use tape::{Tape, Var, LAYER_NORM_EPS};
pub use tensor::Tensor;
