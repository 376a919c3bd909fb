use crate::mae::{image_tensor, patchify_batch, MaeModel, MaskPlan};
use crate::dataio::SliceRecord;
use crate::nnkit::{Element, Module, Tape, Tensor};
use crate::{Error, Result};

/// Drops the CLS token of an unmasked encoder output `[N, 1+g², D]` and lays
/// the patch tokens out as `[N, D, g, g]`; grid cell `(r, c)` holds token
/// `g·r + c`.
pub fn mae_token_grid<T: Element>(latent: &Tensor<T>, grid: usize) -> Result<Tensor<T>> {
    let s = latent.shape();
    let t = grid * grid;
    if s.len() != 3 {
        return Err(Error::Contract(format!("expected [N, 1+T, D] latents, got {s:?}")));
    }
    if s[1] != 1 + t {
        return Err(Error::Contract(format!(
            "token grid needs all {t} patches visible, latent has {} tokens",
            s[1].saturating_sub(1)
        )));
    }
    let (n, d) = (s[0], s[2]);
    let src = latent.data();
    let mut out = vec![T::zero(); n * d * t];
    for b in 0..n {
        for tok in 0..t {
            let row = &src[(b * (1 + t) + 1 + tok) * d..][..d];
            for (ch, &v) in row.iter().enumerate() {
                out[(b * d + ch) * t + tok] = v;
            }
        }
    }
    Tensor::new(vec![n, d, grid, grid], out)
}

/// Runs the frozen encoder unmasked and returns the token grids of the
/// requested 1-based layers, in the order given.
pub fn mae_grids<T: Element>(mae: &MaeModel<T>, records: &[SliceRecord], layers: &[usize]) -> Result<Vec<Tensor<T>>> {
    if mae.parameters().iter().any(|p| !p.frozen) {
        return Err(Error::Contract("segmentation requires a frozen MAE".into()));
    }
    if let Some(l) = layers.iter().find(|&&l| l == 0 || l > mae.config.enc_layers) {
        return Err(Error::Config(format!(
            "encoder layer {l} outside 1..={}",
            mae.config.enc_layers
        )));
    }
    let t = mae.config.num_patches();
    let images: Vec<Tensor<T>> = records.iter().map(image_tensor).collect();
    let patches = patchify_batch(&images, mae.config.patch_size)?;
    let plans = vec![MaskPlan::all_visible(t); records.len()];
    let tape = Tape::new();
    let enc = mae.encode(&tape, &patches, &plans)?;
    layers
        .iter()
        .map(|&l| mae_token_grid(&enc.layers[l - 1].value(), mae.config.grid()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_major_layout() {
        let g = 3;
        let d = 2;
        let latent = Tensor::<f64>::from_fn(vec![1, 1 + g * g, d], |i| (i / d) as f64 * 10.0 + (i % d) as f64);
        let grid = mae_token_grid(&latent, g).unwrap();
        assert_eq!(grid.shape(), &[1, d, g, g]);
        for r in 0..g {
            for c in 0..g {
                let tok = g * r + c;
                assert_eq!(grid.data()[r * g + c], (1 + tok) as f64 * 10.0);
                assert_eq!(grid.data()[g * g + r * g + c], (1 + tok) as f64 * 10.0 + 1.0);
            }
        }
    }

    #[test]
    fn masked_latent_rejected() {
        let latent = Tensor::<f64>::zeros(vec![1, 5, 2]);
        assert!(matches!(mae_token_grid(&latent, 3), Err(Error::Contract(_))));
    }
}
