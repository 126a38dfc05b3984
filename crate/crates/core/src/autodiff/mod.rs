//! Reverse-mode automatic differentiation over dense `rows × cols` tensors.
//!
//! Broadcasting is limited to the `(batch, dim)` patterns the layers need:
//! either operand of a binary op may have a unit row or column dimension.

mod grad_check;
mod tape;
mod tensor;

pub use grad_check::{grad_check, relative_error, GradCheckOptions, GradCheckReport, ParamCheck, REL_ERR_FLOOR};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
