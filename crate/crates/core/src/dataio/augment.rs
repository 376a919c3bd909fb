use serde::{Deserialize, Serialize};

use super::preprocess::{resize_bilinear_corners, resize_nearest_corners};
use super::{brain_coverage_weight, CoverageWeighting, LabelMap, Plane, SliceRecord};
use crate::nnkit::Rng;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentPolicy {
    pub rotation_max_deg: f64,
    pub flip_prob: f64,
    /// Range of the crop side length as a fraction of the image side.
    pub crop_scale_range: (f64, f64),
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            rotation_max_deg: 15.0,
            flip_prob: 0.5,
            crop_scale_range: (0.8, 1.0),
        }
    }
}

impl AugmentPolicy {
    pub fn identity() -> Self {
        AugmentPolicy {
            rotation_max_deg: 0.0,
            flip_prob: 0.0,
            crop_scale_range: (1.0, 1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.crop_scale_range;
        if !(0.0..=1.0).contains(&self.flip_prob)
            || !(lo > 0.0 && lo <= hi && hi <= 1.0)
            || !(self.rotation_max_deg >= 0.0)
        {
            return Err(Error::Config(format!("invalid augmentation policy {self:?}")));
        }
        Ok(())
    }
}

/// One sampled geometric transform, applied identically to an image and its
/// masks.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Transform {
    angle_rad: f64,
    hflip: bool,
    vflip: bool,
    /// (top, left, height, width) of the crop; `None` keeps the full frame.
    crop: Option<(usize, usize, usize, usize)>,
}

impl Transform {
    fn sample(policy: &AugmentPolicy, h: usize, w: usize, rng: &mut Rng) -> Self {
        let r = policy.rotation_max_deg;
        let angle_deg = rng.uniform_range(-r, r);
        let hflip = rng.bernoulli(policy.flip_prob);
        let vflip = rng.bernoulli(policy.flip_prob);
        let (lo, hi) = policy.crop_scale_range;
        let scale = rng.uniform_range(lo, hi);
        let ch = ((scale * h as f64).round() as usize).clamp(1, h);
        let cw = ((scale * w as f64).round() as usize).clamp(1, w);
        let top = rng.below(h - ch + 1);
        let left = rng.below(w - cw + 1);
        Transform {
            angle_rad: angle_deg.to_radians(),
            hflip,
            vflip,
            crop: (ch != h || cw != w).then_some((top, left, ch, cw)),
        }
    }
}

trait Pixels: Copy + Default {
    fn rotate(src: &[Self], h: usize, w: usize, angle: f64) -> Vec<Self>;
    fn resize(src: &[Self], h: usize, w: usize, oh: usize, ow: usize) -> Vec<Self>;
}

fn inverse_rotation(h: usize, w: usize, angle: f64) -> impl Fn(usize, usize) -> (f64, f64) {
    let (s, c) = angle.sin_cos();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    move |y, x| {
        let dy = y as f64 - cy;
        let dx = x as f64 - cx;
        (cy + c * dy - s * dx, cx + s * dy + c * dx)
    }
}

impl Pixels for f32 {
    fn rotate(src: &[f32], h: usize, w: usize, angle: f64) -> Vec<f32> {
        let map = inverse_rotation(h, w, angle);
        let fetch = |y: isize, x: isize| -> f64 {
            if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                0.0
            } else {
                src[y as usize * w + x as usize] as f64
            }
        };
        let mut out = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let (sy, sx) = map(y, x);
                let y0 = sy.floor();
                let x0 = sx.floor();
                let fy = sy - y0;
                let fx = sx - x0;
                let (y0, x0) = (y0 as isize, x0 as isize);
                let top = fetch(y0, x0) * (1.0 - fx) + fetch(y0, x0 + 1) * fx;
                let bot = fetch(y0 + 1, x0) * (1.0 - fx) + fetch(y0 + 1, x0 + 1) * fx;
                out.push((top * (1.0 - fy) + bot * fy) as f32);
            }
        }
        out
    }

    fn resize(src: &[f32], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f32> {
        resize_bilinear_corners(src, h, w, oh, ow)
    }
}

impl Pixels for u16 {
    fn rotate(src: &[u16], h: usize, w: usize, angle: f64) -> Vec<u16> {
        let map = inverse_rotation(h, w, angle);
        let mut out = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let (sy, sx) = map(y, x);
                let (ry, rx) = (sy.round(), sx.round());
                let inside = ry >= 0.0 && rx >= 0.0 && ry < h as f64 && rx < w as f64;
                out.push(if inside { src[ry as usize * w + rx as usize] } else { 0 });
            }
        }
        out
    }

    fn resize(src: &[u16], h: usize, w: usize, oh: usize, ow: usize) -> Vec<u16> {
        resize_nearest_corners(src, h, w, oh, ow)
    }
}

fn apply<P: Pixels>(t: &Transform, src: &[P], h: usize, w: usize) -> Vec<P> {
    let mut cur = if t.angle_rad != 0.0 {
        P::rotate(src, h, w, t.angle_rad)
    } else {
        src.to_vec()
    };
    if t.hflip {
        for row in cur.chunks_mut(w) {
            row.reverse();
        }
    }
    if t.vflip {
        for y in 0..h / 2 {
            for x in 0..w {
                cur.swap(y * w + x, (h - 1 - y) * w + x);
            }
        }
    }
    if let Some((top, left, ch, cw)) = t.crop {
        let mut crop = Vec::with_capacity(ch * cw);
        for y in top..top + ch {
            crop.extend_from_slice(&cur[y * w + left..y * w + left + cw]);
        }
        cur = P::resize(&crop, ch, cw, h, w);
    }
    cur
}

/// Random rotation, horizontal and vertical flips, and a rescaled crop. Masks
/// follow the image through the same transform with nearest-neighbour
/// sampling, and the coverage weight is recomputed from the new brain mask.
pub fn augment(
    s: &SliceRecord,
    policy: &AugmentPolicy,
    coverage: &CoverageWeighting,
    rng: &mut Rng,
) -> Result<SliceRecord> {
    policy.validate()?;
    let (h, w) = (s.image.height, s.image.width);
    let t = Transform::sample(policy, h, w, rng);
    let mut out = s.clone();
    out.image = Plane {
        height: h,
        width: w,
        data: apply(&t, &s.image.data, h, w),
    };
    let warp = |m: &LabelMap| LabelMap {
        height: h,
        width: w,
        data: apply(&t, &m.data, h, w),
    };
    out.seg_mask = s.seg_mask.as_ref().map(warp);
    out.brain_mask = s.brain_mask.as_ref().map(warp);
    if let Some(bm) = &out.brain_mask {
        out.weight = brain_coverage_weight(bm, coverage)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::SliceSource;

    fn record(seed: u64) -> SliceRecord {
        let mut rng = Rng::new(seed);
        let image: Vec<f32> = (0..32 * 32).map(|_| rng.uniform() as f32).collect();
        let mask: Vec<u16> = (0..32 * 32).map(|i| u16::from((i / 32) % 5 < 3)).collect();
        SliceRecord {
            image: Plane::new(32, 32, image).unwrap(),
            source: SliceSource {
                subject_id: "s".into(),
                axis: 2,
                index: 0,
            },
            label: Some(1),
            seg_mask: Some(LabelMap::new(32, 32, mask.clone()).unwrap()),
            brain_mask: Some(LabelMap::new(32, 32, mask).unwrap()),
            weight: 1.0,
        }
    }

    #[test]
    fn identity_policy_is_bit_exact() {
        let s = record(1);
        let out = augment(&s, &AugmentPolicy::identity(), &CoverageWeighting::default(), &mut Rng::new(9)).unwrap();
        assert_eq!(out.image, s.image);
        assert_eq!(out.seg_mask, s.seg_mask);
    }

    #[test]
    fn double_hflip_restores() {
        let s = record(2);
        let policy = AugmentPolicy {
            flip_prob: 1.0,
            ..AugmentPolicy::identity()
        };
        let cov = CoverageWeighting::default();
        let mut rng = Rng::new(3);
        let once = augment(&s, &policy, &cov, &mut rng).unwrap();
        assert_ne!(once.image, s.image);
        let twice = augment(&once, &policy, &cov, &mut rng).unwrap();
        assert_eq!(twice.image, s.image);
    }

    #[test]
    fn masks_stay_binary() {
        let s = record(4);
        let mut rng = Rng::new(5);
        for _ in 0..10 {
            let out = augment(&s, &AugmentPolicy::default(), &CoverageWeighting::default(), &mut rng).unwrap();
            assert!(out.brain_mask.as_ref().unwrap().is_binary());
            assert!(out.image.data.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
