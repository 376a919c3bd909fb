//! Deterministic fixtures shared by the benchmarks.

use maefuse_core::dataio::synth::{shapes_slice, texture_slice};
use maefuse_core::dataio::{SliceRecord, SliceSource};
use maefuse_core::{Rng, Tensor};

pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor<f32> {
    let mut rng = Rng::new(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.normal() as f32)
}

fn record(i: usize, image: maefuse_core::dataio::Plane) -> SliceRecord {
    SliceRecord {
        image,
        source: SliceSource {
            subject_id: format!("bench{i}"),
            axis: 2,
            index: i,
        },
        label: None,
        seg_mask: None,
        brain_mask: None,
        weight: 1.0,
    }
}

pub fn texture_batch(n: usize, size: usize, seed: u64) -> Vec<SliceRecord> {
    let mut rng = Rng::new(seed);
    (0..n)
        .map(|i| {
            let mut r = record(i, texture_slice(i % 3, size, &mut rng));
            r.label = Some(i % 3);
            r
        })
        .collect()
}

pub fn shapes_batch(n: usize, size: usize, seed: u64) -> Vec<SliceRecord> {
    let mut rng = Rng::new(seed);
    (0..n)
        .map(|i| {
            let (image, mask) = shapes_slice(size, &mut rng);
            let mut r = record(i, image);
            r.seg_mask = Some(mask);
            r
        })
        .collect()
}
