//! Minimal reverse-mode differentiation: dense `f64` tensors, a
//! define-by-run graph, dense layers and first-order optimizers.

mod gradcheck;
mod graph;
mod nn;
mod optim;
mod param;
mod tensor;

pub use gradcheck::{
    gradient_check, gradient_check_with, relative_error, GradCheckReport, RELATIVE_ERROR_FLOOR,
};
pub use graph::{Graph, NodeId, OpKind, EXP_CLIP, LOG_FLOOR};
pub use nn::{Activation, Binding, Dense, Mlp};
pub use optim::{optimizer_step, OptimizerConfig, OptimizerKind};
pub use param::{ParamId, ParamStore, Parameter};
pub use tensor::Tensor;
