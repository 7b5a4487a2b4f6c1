//! Dense tensors, a reverse-mode tape, Adam and gradient clipping.
//!
//! Math runs in `f64` so that every gradient can be checked against central
//! differences at a tight tolerance.

mod check;
mod kernels;
mod optim;
mod tape;
mod tensor;

pub use check::{finite_difference_check, finite_difference_check_params, DEFAULT_STEP};
pub use optim::{clip_gradients, grad_norm, OptimizerState};
pub use tape::{Gradients, Mode, Primitive, Tape, Var};
pub use tensor::{ParamId, ParamStore, Tensor};
