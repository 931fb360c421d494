//! Dense `f64` tensors, a reverse-mode tape, named parameters and seeded
//! random streams.

mod gradcheck;
pub mod ops;
mod params;
mod rng;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, relative_error, GradCheckReport, ParamCheck, RELATIVE_FLOOR};
pub use ops::{dropout, dropout_mask, gelu, layer_norm, matmul, matmul_nt, sigmoid, softmax, LAYER_NORM_EPS};
pub use params::{ParamId, ParamStore, Parameter};
pub use rng::RngStream;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::focal_logit_terms;
