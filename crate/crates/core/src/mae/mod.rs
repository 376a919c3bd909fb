//! Masked-autoencoder pretraining with a brain-coverage weighted
//! reconstruction loss.

mod config;
mod loss;
mod mask;
mod model;
mod patch;
mod train;

pub use config::{LossNormalization, MaeConfig};
pub use loss::{masked_mse_per_sample, masked_token_weights, weighted_recon_loss};
pub use mask::{random_mask, MaskPlan};
pub use model::{EncoderOutput, MaeDecoder, MaeEncoder, MaeModel};
pub use patch::{normalize_patches, patchify, patchify_batch, unpatchify};
pub use train::{batch_ids, image_tensor, mask_batch, pretrain_step, reconstruction_loss};
