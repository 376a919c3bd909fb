//! Tiny model configurations and records for fast tests.

use maefuse_core::dataio::synth::{shapes_slice, texture_slice};
use maefuse_core::dataio::{SliceRecord, SliceSource};
use maefuse_core::funet::{FunetConfig, FusionStrategy};
use maefuse_core::mae::MaeConfig;
use maefuse_core::Rng;

pub fn tiny_mae() -> MaeConfig {
    MaeConfig {
        image_size: 16,
        patch_size: 4,
        enc_dim: 16,
        enc_layers: 2,
        enc_heads: 2,
        dec_dim: 8,
        dec_layers: 1,
        dec_heads: 2,
        ..MaeConfig::desk()
    }
}

pub fn tiny_funet(strategy: FusionStrategy) -> FunetConfig {
    FunetConfig {
        image_size: 16,
        base_width: 4,
        depth: 2,
        fusion_layers: vec![1, 2, 2],
        fusion_strategy: strategy,
        num_classes: 2,
        norm_groups: 2,
    }
}

fn source(i: usize) -> SliceSource {
    SliceSource { subject_id: format!("s{i}"), axis: 2, index: i }
}

pub fn shape_records(n: usize, size: usize, seed: u64) -> Vec<SliceRecord> {
    let mut rng = Rng::new(seed);
    (0..n)
        .map(|i| {
            let (image, mask) = shapes_slice(size, &mut rng);
            SliceRecord { image, source: source(i), label: None, seg_mask: Some(mask), brain_mask: None, weight: 1.0 }
        })
        .collect()
}

pub fn texture_records(per_class: usize, classes: usize, size: usize, seed: u64) -> Vec<SliceRecord> {
    let mut rng = Rng::new(seed);
    (0..per_class * classes)
        .map(|i| {
            let c = i % classes;
            SliceRecord {
                image: texture_slice(c, size, &mut rng),
                source: source(i),
                label: Some(c),
                seg_mask: None,
                brain_mask: None,
                weight: 1.0,
            }
        })
        .collect()
}
