//! Few-shot MRI transformer pipeline.
//!
//! The crate is organised bottom-up:
//!
//! * [`nnkit`] is a small deterministic reverse-mode autodiff engine with the
//!   layers and the AdamW optimizer the models are built from.
//! * [`dataio`] ingests NIfTI-1 and raw volumes, extracts and preprocesses
//!   slices, and implements the stride and few-shot samplers.
//! * [`mae`] holds the masked autoencoder and its coverage-weighted
//!   reconstruction loss.
//! * [`classify`] trains linear probes on the frozen encoder's CLS token.
//! * [`funet`] is the fused U-Net segmenter, the MAE-direct baseline and the
//!   hybrid Dice/Focal/CE loss.
//! * [`metrics`] computes Dice/IoU, region reports and stability summaries.

pub mod classify;
pub mod dataio;
mod error;
pub mod funet;
pub mod mae;
pub mod metrics;
pub mod nnkit;

pub use error::{Error, NiftiError, Result};
pub use nnkit::{Element, Module, Parameter, Rng, RngState, Tape, Tensor, Var};
