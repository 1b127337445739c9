//! Dense tensors and differentiable layer primitives.
//!
//! Every layer carries a hand-derived backward pass; [`grad_check`] verifies
//! them against central finite differences.

mod gradcheck;
mod layer;
pub mod ops;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport, REL_ERROR_FLOOR};
pub use layer::{Activation, Cache, Layer, LayerGrad, LayerKind, LayerParams, Param};
pub use ops::{
    adaptive_avg_pool1d, batchnorm1d, bce_loss, conv1d_same_forward, dense_forward, dropout,
    lstm_cell, lstm_param_count, maxpool1d, relu, sigmoid, tanh_act, Mode,
};
pub use tensor::Tensor;
#[allow(unused_imports)]
pub(crate) use tensor::gemm;
