//! Reverse-mode automatic differentiation over dense `f64` matrices.

pub mod gradcheck;
pub mod math;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
