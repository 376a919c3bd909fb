//! Differentiable operations, implemented as methods on [`Var`](super::Var).

mod conv;
mod elementwise;
mod matmul;
mod norm;
mod pool;
pub(crate) mod resize;
mod shape;
mod softmax;

