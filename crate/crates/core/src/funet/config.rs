use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionStrategy {
    #[default]
    Concat,
    Add,
    Attention,
}

impl FusionStrategy {
    pub const ALL: [FusionStrategy; 3] = [FusionStrategy::Concat, FusionStrategy::Add, FusionStrategy::Attention];

    pub fn as_str(self) -> &'static str {
        match self {
            FusionStrategy::Concat => "concat",
            FusionStrategy::Add => "add",
            FusionStrategy::Attention => "attention",
        }
    }
}

impl std::str::FromStr for FusionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FusionStrategy::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown fusion strategy `{s}` (concat|add|attention)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FunetConfig {
    pub image_size: usize,
    pub base_width: usize,
    /// Number of down/up stages; the bottleneck adds one more fusion point.
    pub depth: usize,
    /// Encoder layers (1-based) tapped for fusion, shallow to deep. The
    /// deepest feeds the bottleneck, the shallowest the finest decoder stage.
    pub fusion_layers: Vec<usize>,
    pub fusion_strategy: FusionStrategy,
    pub num_classes: usize,
    pub norm_groups: usize,
}

impl Default for FunetConfig {
    fn default() -> Self {
        FunetConfig::full()
    }
}

impl FunetConfig {
    pub fn full() -> Self {
        FunetConfig {
            image_size: 224,
            base_width: 64,
            depth: 4,
            fusion_layers: vec![1, 3, 6, 9, 12],
            fusion_strategy: FusionStrategy::Concat,
            num_classes: 2,
            norm_groups: 8,
        }
    }

    pub fn desk() -> Self {
        FunetConfig {
            image_size: 64,
            base_width: 8,
            depth: 3,
            fusion_layers: vec![1, 2, 3, 4],
            ..FunetConfig::full()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(FunetConfig::full()),
            "desk" => Ok(FunetConfig::desk()),
            other => Err(Error::Config(format!("unknown FUnet preset `{other}` (full|desk)"))),
        }
    }

    /// Channel width at down stage `i` (the bottleneck is `i = depth`).
    pub fn width(&self, i: usize) -> usize {
        self.base_width << i
    }

    /// Encoder layer feeding fusion point `k` (0 = bottleneck, `k` = k-th
    /// decoder stage from coarse to fine).
    pub fn layer_for_point(&self, k: usize) -> usize {
        self.fusion_layers[self.depth - k]
    }

    /// Validates against the tapped encoder's depth and token grid side.
    pub fn validate(&self, enc_layers: usize, grid: usize) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.depth == 0 || self.base_width == 0 {
            return fail("funet depth and base_width must be >= 1".into());
        }
        if self.num_classes < 2 {
            return fail(format!("segmentation needs >= 2 classes, got {}", self.num_classes));
        }
        if self.image_size % (1 << self.depth) != 0 {
            return fail(format!(
                "image_size {} is not divisible by 2^{}",
                self.image_size, self.depth
            ));
        }
        if self.fusion_layers.len() != self.depth + 1 {
            return fail(format!(
                "{} fusion layers for {} fusion points",
                self.fusion_layers.len(),
                self.depth + 1
            ));
        }
        if let Some(l) = self.fusion_layers.iter().find(|&&l| l == 0 || l > enc_layers) {
            return fail(format!("fusion layer {l} outside encoder layers 1..={enc_layers}"));
        }
        if self.norm_groups == 0 || self.base_width % self.norm_groups != 0 {
            return fail(format!(
                "base_width {} not divisible by {} norm groups",
                self.base_width, self.norm_groups
            ));
        }
        if grid == 0 {
            return fail("MAE token grid is empty".into());
        }
        Ok(())
    }
}
