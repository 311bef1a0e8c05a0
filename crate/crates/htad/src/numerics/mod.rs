//! Dense f64 primitives, reverse-mode gradients, Adam, and gradient checking.

pub mod checkpoint;
mod gradcheck;
mod store;
mod tape;
mod tensor;

pub use gradcheck::grad_check;
pub use store::{AdamParams, ParamId, Parameter, ParameterStore};
pub use tape::{GradContext, VarId};
pub use tensor::Tensor;
