//! Numeric substrate: dense tensors, reverse-mode differentiation over a
//! fixed primitive set, the Adam optimizer, and finite-difference checking.

mod adam;
mod gradcheck;
mod tape;
mod tensor;

pub use adam::{AdamParams, Param, ParamStore};
pub use gradcheck::{grad_check, GradCheckOptions};
pub use tape::{Grads, Mode, Session, Tape, Var, BCE_LOGIT_CLAMP};
pub use tensor::{matmul, Real, Tensor};
