use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How the per-sample weighted losses are averaged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossNormalization {
    /// `(1/N) Σ w_i l_i`.
    #[default]
    BatchSize,
    /// `Σ w_i l_i / Σ w_i`.
    WeightSum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaeConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub enc_dim: usize,
    pub enc_layers: usize,
    pub enc_heads: usize,
    pub dec_dim: usize,
    pub dec_layers: usize,
    pub dec_heads: usize,
    pub mask_ratio: f64,
    pub mlp_ratio: f64,
    /// Normalize each target patch to zero mean, unit variance.
    pub norm_pix_loss: bool,
    pub loss_normalization: LossNormalization,
}

impl Default for MaeConfig {
    fn default() -> Self {
        MaeConfig::full()
    }
}

impl MaeConfig {
    /// ViT-Base encoder with an 8-block, 512-wide decoder.
    pub fn full() -> Self {
        MaeConfig {
            image_size: 224,
            patch_size: 16,
            enc_dim: 768,
            enc_layers: 12,
            enc_heads: 12,
            dec_dim: 512,
            dec_layers: 8,
            dec_heads: 16,
            mask_ratio: 0.75,
            mlp_ratio: 4.0,
            norm_pix_loss: false,
            loss_normalization: LossNormalization::BatchSize,
        }
    }

    /// Small preset for minutes-scale CPU runs.
    pub fn desk() -> Self {
        MaeConfig {
            image_size: 64,
            patch_size: 8,
            enc_dim: 64,
            enc_layers: 4,
            enc_heads: 4,
            dec_dim: 32,
            dec_layers: 2,
            dec_heads: 4,
            ..MaeConfig::full()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(MaeConfig::full()),
            "desk" => Ok(MaeConfig::desk()),
            other => Err(Error::Config(format!("unknown MAE preset `{other}` (full|desk)"))),
        }
    }

    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn num_patches(&self) -> usize {
        self.grid() * self.grid()
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.patch_size == 0 || self.image_size == 0 || self.image_size % self.patch_size != 0 {
            return fail(format!(
                "image_size {} must be a positive multiple of patch_size {}",
                self.image_size, self.patch_size
            ));
        }
        if self.enc_heads == 0 || self.enc_dim % self.enc_heads != 0 {
            return fail(format!("enc_dim {} not divisible by enc_heads {}", self.enc_dim, self.enc_heads));
        }
        if self.dec_heads == 0 || self.dec_dim % self.dec_heads != 0 {
            return fail(format!("dec_dim {} not divisible by dec_heads {}", self.dec_dim, self.dec_heads));
        }
        if self.enc_layers == 0 {
            return fail("enc_layers must be >= 1".into());
        }
        if !(self.mask_ratio > 0.0 && self.mask_ratio < 1.0) {
            return fail(format!("mask_ratio {} must lie in (0,1)", self.mask_ratio));
        }
        if !(self.mlp_ratio > 0.0) {
            return fail(format!("mlp_ratio {} must be positive", self.mlp_ratio));
        }
        Ok(())
    }
}
