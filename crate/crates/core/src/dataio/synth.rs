//! Synthetic images and volumes for smoke tests and demos.

use super::{LabelMap, Modality, Plane, Volume};
use crate::nnkit::Rng;

/// Tissue labels of the synthetic head phantom.
pub const PHANTOM_TISSUES: [&str; 4] = ["background", "white matter", "gray matter", "csf"];

/// Mean intensity of (white matter, gray matter, csf, skull) per modality.
fn contrast(m: Modality) -> [f32; 4] {
    match m {
        Modality::T1 => [0.85, 0.55, 0.15, 0.35],
        Modality::T2 => [0.35, 0.55, 0.95, 0.15],
        Modality::Flair => [0.45, 0.65, 0.05, 0.2],
        Modality::Pd => [0.6, 0.75, 0.85, 0.25],
        Modality::T2Star => [0.3, 0.45, 0.8, 0.05],
        Modality::Swi => [0.5, 0.4, 0.7, 0.1],
        Modality::Dwi => [0.55, 0.6, 0.2, 0.02],
    }
}

fn noise(rng: &mut Rng, amp: f64) -> f32 {
    (rng.normal() * amp) as f32
}

/// Head phantom volume with its tissue label volume and binary brain mask.
/// The head is an ellipsoid with a skull shell, gray matter rim, white
/// matter core and two ventricles.
pub fn phantom_volume(dims: [usize; 3], voxel_size: [f32; 3], modality: Modality, rng: &mut Rng) -> (Volume, Volume, Volume) {
    let [nx, ny, nz] = dims;
    let jitter = |rng: &mut Rng| 1.0 + rng.uniform_range(-0.08, 0.08);
    let (ax, ay, az) = (0.42 * jitter(rng), 0.46 * jitter(rng), 0.44 * jitter(rng));
    let shift = [rng.uniform_range(-0.03, 0.03), rng.uniform_range(-0.03, 0.03), 0.0];
    let tone = contrast(modality);
    let n = nx * ny * nz;
    let (mut img, mut lab, mut brain) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let u = (x as f64 + 0.5) / nx as f64 - 0.5 - shift[0];
                let v = (y as f64 + 0.5) / ny as f64 - 0.5 - shift[1];
                let w = (z as f64 + 0.5) / nz as f64 - 0.5 - shift[2];
                let r = ((u / ax).powi(2) + (v / ay).powi(2) + (w / az).powi(2)).sqrt();
                let vent = ((u.abs() - 0.07) / 0.04).powi(2) + (v / 0.14).powi(2) + (w / 0.1).powi(2);
                let (label, base) = if r > 1.0 {
                    (0u16, 0.0)
                } else if r > 0.9 {
                    (0, tone[3])
                } else if vent < 1.0 {
                    (3, tone[2])
                } else if r > 0.75 {
                    (2, tone[1])
                } else {
                    (1, tone[0])
                };
                let value = if base > 0.0 { base + noise(rng, 0.03) } else { noise(rng, 0.01).abs() };
                img.push(value.max(0.0) * 1000.0);
                lab.push(label as f32);
                brain.push(if label > 0 { 1.0 } else { 0.0 });
            }
        }
    }
    let mk = |data| Volume {
        dims,
        voxel_size,
        data,
        modality: Some(modality),
        subject_id: String::new(),
    };
    (mk(img), mk(lab), mk(brain))
}

/// A 2-D head-like slice with its binary brain mask. The brain ellipse is
/// placed and sized at random so coverage varies across samples.
pub fn phantom_slice(size: usize, rng: &mut Rng) -> (Plane, LabelMap) {
    let cx = rng.uniform_range(0.35, 0.65);
    let cy = rng.uniform_range(0.35, 0.65);
    let rx = rng.uniform_range(0.15, 0.35);
    let ry = rng.uniform_range(0.15, 0.35);
    let mut img = Vec::with_capacity(size * size);
    let mut mask = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let u = ((x as f64 + 0.5) / size as f64 - cx) / rx;
            let v = ((y as f64 + 0.5) / size as f64 - cy) / ry;
            let r = (u * u + v * v).sqrt();
            let (val, m) = if r < 0.6 {
                (0.8 - 0.3 * r, 1)
            } else if r < 0.85 {
                (0.5, 1)
            } else if r < 1.0 {
                (0.25, 0)
            } else {
                (0.0, 0)
            };
            img.push(val as f32);
            mask.push(m);
        }
    }
    (
        Plane { height: size, width: size, data: img },
        LabelMap { height: size, width: size, data: mask },
    )
}

/// Oriented texture for class `class % 3`: horizontal stripes, vertical
/// stripes, or a checkerboard, with random frequency, phase and noise.
pub fn texture_slice(class: usize, size: usize, rng: &mut Rng) -> Plane {
    let freq = rng.uniform_range(3.0, 5.0);
    let phase = rng.uniform_range(0.0, std::f64::consts::TAU);
    let tau = std::f64::consts::TAU;
    let mut data = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (fy, fx) = (y as f64 / size as f64, x as f64 / size as f64);
            let s = match class % 3 {
                0 => (tau * freq * fy + phase).sin(),
                1 => (tau * freq * fx + phase).sin(),
                _ => (tau * freq * fx + phase).sin() * (tau * freq * fy + phase).sin(),
            };
            let v = 0.5 + 0.4 * s + rng.normal() * 0.05;
            data.push(v.clamp(0.0, 1.0) as f32);
        }
    }
    Plane { height: size, width: size, data }
}

/// Noisy image of 1-3 random ellipses with the binary foreground mask.
pub fn shapes_slice(size: usize, rng: &mut Rng) -> (Plane, LabelMap) {
    let count = 1 + rng.below(3);
    let shapes: Vec<[f64; 5]> = (0..count)
        .map(|_| {
            [
                rng.uniform_range(0.25, 0.75),
                rng.uniform_range(0.25, 0.75),
                rng.uniform_range(0.08, 0.22),
                rng.uniform_range(0.08, 0.22),
                rng.uniform_range(0.6, 0.95),
            ]
        })
        .collect();
    let mut img = Vec::with_capacity(size * size);
    let mut mask = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (fx, fy) = ((x as f64 + 0.5) / size as f64, (y as f64 + 0.5) / size as f64);
            let hit = shapes
                .iter()
                .find(|s| ((fx - s[0]) / s[2]).powi(2) + ((fy - s[1]) / s[3]).powi(2) <= 1.0);
            let base = hit.map_or(0.15, |s| s[4]);
            img.push((base + rng.normal() * 0.05).clamp(0.0, 1.0) as f32);
            mask.push(u16::from(hit.is_some()));
        }
    }
    (
        Plane { height: size, width: size, data: img },
        LabelMap { height: size, width: size, data: mask },
    )
}

/// Noisy image of a random elliptical ring (annulus) with its binary mask.
pub fn ring_slice(size: usize, rng: &mut Rng) -> (Plane, LabelMap) {
    let (cx, cy) = (rng.uniform_range(0.35, 0.65), rng.uniform_range(0.35, 0.65));
    let (rx, ry) = (rng.uniform_range(0.18, 0.3), rng.uniform_range(0.18, 0.3));
    let inner = rng.uniform_range(0.45, 0.7);
    let level = rng.uniform_range(0.6, 0.95);
    let mut img = Vec::with_capacity(size * size);
    let mut mask = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let u = ((x as f64 + 0.5) / size as f64 - cx) / rx;
            let v = ((y as f64 + 0.5) / size as f64 - cy) / ry;
            let r = (u * u + v * v).sqrt();
            let hit = r <= 1.0 && r >= inner;
            let base = if hit { level } else { 0.15 };
            img.push((base + rng.normal() * 0.05).clamp(0.0, 1.0) as f32);
            mask.push(u16::from(hit));
        }
    }
    (
        Plane { height: size, width: size, data: img },
        LabelMap { height: size, width: size, data: mask },
    )
}
