use super::{normalize_patches, patchify_batch, random_mask, weighted_recon_loss, MaeModel, MaskPlan};
use crate::dataio::SliceRecord;
use crate::nnkit::{AdamW, Element, Rng, Tape, Tensor};
use crate::{Error, Result};

/// A record's image as a `[1, H, W]` tensor.
pub fn image_tensor<T: Element>(r: &SliceRecord) -> Tensor<T> {
    Tensor::from_fn(vec![1, r.image.height, r.image.width], |i| T::from_f64(r.image.data[i] as f64))
}

pub fn batch_ids(batch: &[SliceRecord]) -> String {
    batch
        .iter()
        .map(|r| format!("{}:{}:{}", r.source.subject_id, r.source.axis, r.source.index))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Draws one mask plan per sample.
pub fn mask_batch(n: usize, t: usize, ratio: f64, rng: &mut Rng) -> Result<Vec<MaskPlan>> {
    (0..n).map(|_| random_mask(t, ratio, rng)).collect()
}

/// Weighted reconstruction loss of `model` on `batch` under the given plans,
/// without updating anything.
pub fn reconstruction_loss<T: Element>(model: &MaeModel<T>, batch: &[SliceRecord], plans: &[MaskPlan]) -> Result<f64> {
    let tape = Tape::new();
    let (patches, target, weights) = prepare(model, batch)?;
    let out = model.encode(&tape, &patches, plans)?;
    let pred = model.decode(&tape, out.last, plans)?;
    let loss = weighted_recon_loss(pred, &target, plans, &weights, model.config.loss_normalization)?;
    Ok(loss.item())
}

fn prepare<T: Element>(model: &MaeModel<T>, batch: &[SliceRecord]) -> Result<(Tensor<T>, Tensor<T>, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Contract("pretraining batch is empty".into()));
    }
    let images: Vec<Tensor<T>> = batch.iter().map(image_tensor).collect();
    let patches = patchify_batch(&images, model.config.patch_size)?;
    let target = if model.config.norm_pix_loss {
        normalize_patches(&patches)
    } else {
        patches.clone()
    };
    let weights = batch.iter().map(|r| r.weight as f64).collect();
    Ok((patches, target, weights))
}

/// One masked-reconstruction forward/backward pass and AdamW update. Returns
/// the weighted loss. Non-finite values abort with the step and batch ids.
pub fn pretrain_step<T: Element>(
    model: &mut MaeModel<T>,
    opt: &mut AdamW<T>,
    batch: &[SliceRecord],
    mask_rng: &mut Rng,
) -> Result<f64> {
    let step = opt.step_count() + 1;
    let diverged = |e: Error| match e {
        Error::NonFinite { op } => Error::Diverged {
            step,
            batch: batch_ids(batch),
            detail: format!("non-finite value from {op}"),
        },
        other => other,
    };
    let (patches, target, weights) = prepare(model, batch)?;
    let plans = mask_batch(batch.len(), model.config.num_patches(), model.config.mask_ratio, mask_rng)?;
    let tape = Tape::new();
    let loss = (|| {
        let out = model.encode(&tape, &patches, &plans)?;
        let pred = model.decode(&tape, out.last, &plans)?;
        weighted_recon_loss(pred, &target, &plans, &weights, model.config.loss_normalization)
    })()
    .map_err(diverged)?;
    let value = loss.item();
    let grads = tape.backward(loss).map_err(diverged)?;
    drop(tape);
    opt.step(model, &grads).map_err(diverged)?;
    Ok(value)
}
