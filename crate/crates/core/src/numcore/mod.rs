//! Dense `f64` tensors with tape-based reverse-mode differentiation, the
//! parameter store, optimizers and the binary checkpoint format.

pub mod checkpoint;
pub mod gradcheck;
mod graph;
mod layers;
mod optim;
mod params;
mod tensor;

pub use graph::{elu, expm1_ratio, expm1_ratio_deriv, sigmoid, softmax_rows, softplus, Graph, Var, EXPM1_RATIO_SERIES_BELOW};
pub use layers::{mlp_param_count, uniform_init, Linear, Mlp};
pub use optim::{clip_grad_norm, sgd_step, Optimizer, OptimizerKind};
pub use params::{Param, ParamId, ParamSet};
pub use tensor::Tensor;
