//! Deterministic reverse-mode autodiff over dense tensors.
//!
//! Computations are recorded on a [`Tape`]; each operation is a method on
//! [`Var`] that evaluates eagerly, checks that the result is finite, and stores
//! a closure for the reverse sweep. Models own [`Parameter`]s and bind them to
//! a tape per forward pass; frozen parameters are bound as constants and so
//! never receive gradients.

mod element;
mod gradcheck;
mod layers;
pub(crate) mod ops;
mod optim;
mod param;
mod rng;
mod tape;
pub(crate) mod tensor;

pub use element::Element;
#[allow(unused_imports)]
pub(crate) use element::{gemm, MatView};
pub use gradcheck::{grad_check, GradCheckReport, FD_STEP};
pub use layers::{Conv2d, GroupNorm, LayerNorm, Linear, Mlp, MultiHeadAttention, TransformerBlock};
pub use optim::{AdamW, AdamWConfig, Moments};
pub use param::{Init, Module, Parameter};
pub use rng::{stream_id, Rng, RngState};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

/// Multi-head attention of `q` over `kv` with the given projections.
pub fn multi_head_attention<'t, T: Element>(
    tape: &'t Tape<T>,
    q: Var<'t, T>,
    kv: Var<'t, T>,
    params: &MultiHeadAttention<T>,
) -> crate::Result<Var<'t, T>> {
    params.forward(tape, q, kv)
}
