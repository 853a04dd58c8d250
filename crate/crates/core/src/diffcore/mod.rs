//! Reverse-mode differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records one forward computation, with parameters pulled in as
//! leaves from a [`ParameterStore`]. After [`Graph::backward`] the leaf
//! gradients are folded back into the store with
//! [`Graph::accumulate_param_grads`].

mod gradcheck;
mod graph;
mod store;
mod tensor;

pub use gradcheck::{grad_check, relative_error, GradCheck};
pub use graph::{Graph, OpKind, Var, BCE_EPS};
pub use store::{ParamId, Parameter, ParameterStore};
pub use tensor::Tensor;

pub(crate) use graph::sigmoid;
