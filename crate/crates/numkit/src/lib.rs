//! Dense 2-D `f64` tensors with tape-based reverse-mode differentiation.
//!
//! Every learned component downstream is assembled from the operations on
//! [`Tape`]. Tensors are always two-dimensional and there is no implicit
//! broadcasting; batching is done with explicit loops by callers.

mod attention;
mod error;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use attention::{causal_attention, scaled_dot_attention, MASKED_LOGIT};
pub use error::{NumError, Result};
pub use gradcheck::{
    analytic_gradient, grad_check, grad_error, numeric_gradient, param_grad_check,
};
pub use params::{Binder, ParamId, ParamStore, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use tape::{softmax_rows_value, Gradients, Tape, Var};
pub use tensor::Tensor;
