use crate::nnkit::{Element, Tensor};
use crate::{Error, Result};

/// Splits a `[1, H, W]` image into `(H/p)·(W/p)` row-major patches, each
/// flattened row-major: `[T, p²]`.
pub fn patchify<T: Element>(image: &Tensor<T>, patch: usize) -> Result<Tensor<T>> {
    let s = image.shape();
    if s.len() != 3 || s[0] != 1 || patch == 0 || s[1] % patch != 0 || s[2] % patch != 0 {
        return Err(Error::Contract(format!(
            "patchify expects a [1, H, W] image with H, W divisible by {patch}, got {s:?}"
        )));
    }
    let (h, w) = (s[1], s[2]);
    let (gh, gw) = (h / patch, w / patch);
    let src = image.data();
    let mut out = Vec::with_capacity(h * w);
    for gy in 0..gh {
        for gx in 0..gw {
            for py in 0..patch {
                let row = (gy * patch + py) * w + gx * patch;
                out.extend_from_slice(&src[row..row + patch]);
            }
        }
    }
    Tensor::new(vec![gh * gw, patch * patch], out)
}

/// Inverse of [`patchify`] for a square image of side `size`.
pub fn unpatchify<T: Element>(tokens: &Tensor<T>, patch: usize, size: usize) -> Result<Tensor<T>> {
    let g = if patch == 0 { 0 } else { size / patch };
    if tokens.shape() != [g * g, patch * patch] || g * patch != size || g == 0 {
        return Err(Error::Contract(format!(
            "unpatchify expects [{}, {}] tokens for a {size}x{size} image, got {:?}",
            g * g,
            patch * patch,
            tokens.shape()
        )));
    }
    let src = tokens.data();
    let mut out = vec![T::zero(); size * size];
    for gy in 0..g {
        for gx in 0..g {
            let tok = &src[(gy * g + gx) * patch * patch..][..patch * patch];
            for py in 0..patch {
                let row = (gy * patch + py) * size + gx * patch;
                out[row..row + patch].copy_from_slice(&tok[py * patch..(py + 1) * patch]);
            }
        }
    }
    Tensor::new(vec![1, size, size], out)
}

/// Patchifies a batch of images into `[N, T, p²]`.
pub fn patchify_batch<T: Element>(images: &[Tensor<T>], patch: usize) -> Result<Tensor<T>> {
    let mut data = Vec::new();
    let mut tp = (0, 0);
    for img in images {
        let t = patchify(img, patch)?;
        if data.is_empty() {
            tp = (t.shape()[0], t.shape()[1]);
        } else if (t.shape()[0], t.shape()[1]) != tp {
            return Err(Error::Contract("images in a batch must share one size".into()));
        }
        data.extend_from_slice(t.data());
    }
    Tensor::new(vec![images.len(), tp.0, tp.1], data)
}

/// Zero-mean, unit-variance version of every patch (over its pixels).
pub fn normalize_patches<T: Element>(tokens: &Tensor<T>) -> Tensor<T> {
    let d = *tokens.shape().last().unwrap_or(&1);
    let mut out = tokens.clone();
    for row in out.data_mut().chunks_mut(d.max(1)) {
        let n = row.len() as f64;
        let mean = row.iter().map(|v| v.as_f64()).sum::<f64>() / n;
        let var = row.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / n;
        let inv = 1.0 / (var + 1e-6).sqrt();
        for v in row.iter_mut() {
            *v = T::from_f64((v.as_f64() - mean) * inv);
        }
    }
    out
}
