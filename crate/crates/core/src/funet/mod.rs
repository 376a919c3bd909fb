//! MAE-FUnet segmentation: a U-Net whose bottleneck and decoder stages fuse
//! token grids from a frozen MAE encoder, trained with a Dice + focal +
//! cross-entropy loss.

mod config;
mod fusion;
mod grid;
mod loss;
mod model;
mod train;

pub use config::{FunetConfig, FusionStrategy};
pub use fusion::FusionBlock;
pub use grid::{mae_grids, mae_token_grid};
pub use loss::{dice_loss, focal_loss, hybrid_loss, one_hot, pixel_ce, HybridLoss, HybridLossConfig, DICE_EPS, PROB_FLOOR};
pub use model::{DoubleConv, FunetModel, MaeDirectHead, Segmenter};
pub use train::{predict_labels, prepare_seg_batch, seg_train_step, LossParts, SegBatch};
