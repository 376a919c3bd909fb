use super::{hybrid_loss, mae_grids, HybridLossConfig, Segmenter};
use crate::dataio::SliceRecord;
use crate::mae::{batch_ids, MaeModel};
use crate::nnkit::{AdamW, Element, Tape, Tensor, Var};
use crate::{Error, Result};

/// Images, flattened pixel labels and the MAE token grids of a batch.
#[derive(Clone, Debug)]
pub struct SegBatch<T: Element = f32> {
    pub images: Tensor<T>,
    pub labels: Vec<usize>,
    pub grids: Vec<Tensor<T>>,
    pub ids: String,
}

impl<T: Element> SegBatch<T> {
    pub fn len(&self) -> usize {
        self.images.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The sub-batch of the given sample indices.
    pub fn select(&self, idx: &[usize]) -> SegBatch<T> {
        let take = |t: &Tensor<T>| {
            let per = t.numel() / t.shape()[0];
            let mut data = Vec::with_capacity(idx.len() * per);
            for &i in idx {
                data.extend_from_slice(&t.data()[i * per..(i + 1) * per]);
            }
            let mut shape = t.shape().to_vec();
            shape[0] = idx.len();
            Tensor::from_parts(shape, data)
        };
        let per = self.labels.len() / self.len();
        SegBatch {
            images: take(&self.images),
            labels: idx.iter().flat_map(|&i| self.labels[i * per..(i + 1) * per].iter().copied()).collect(),
            grids: self.grids.iter().map(take).collect(),
            ids: self.ids.clone(),
        }
    }
}

/// Assembles a batch, running the frozen MAE once for the grids `layers`.
pub fn prepare_seg_batch<T: Element>(records: &[SliceRecord], mae: &MaeModel<T>, layers: &[usize], num_classes: usize) -> Result<SegBatch<T>> {
    if records.is_empty() {
        return Err(Error::Data("segmentation batch is empty".into()));
    }
    let (h, w) = (records[0].image.height, records[0].image.width);
    let mut images = Vec::with_capacity(records.len() * h * w);
    let mut labels = Vec::with_capacity(records.len() * h * w);
    for r in records {
        let mask = r.seg_mask.as_ref().ok_or_else(|| {
            Error::Data(format!(
                "slice {}:{}:{} has no segmentation mask",
                r.source.subject_id, r.source.axis, r.source.index
            ))
        })?;
        if (r.image.height, r.image.width) != (h, w) || (mask.height, mask.width) != (h, w) {
            return Err(Error::Data("images and masks in a batch must share one size".into()));
        }
        images.extend(r.image.data.iter().map(|&v| T::from_f64(v as f64)));
        for &l in &mask.data {
            if l as usize >= num_classes {
                return Err(Error::Data(format!("mask label {l} >= {num_classes} classes")));
            }
            labels.push(l as usize);
        }
    }
    Ok(SegBatch {
        images: Tensor::new(vec![records.len(), 1, h, w], images)?,
        labels,
        grids: mae_grids(mae, records, layers)?,
        ids: batch_ids(records),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub dice: f64,
    pub focal: f64,
    pub ce: f64,
}

fn forward<'t, T: Element, M: Segmenter<T>>(tape: &'t Tape<T>, model: &M, batch: &SegBatch<T>) -> Result<Var<'t, T>> {
    let images = tape.constant(batch.images.clone());
    let grids: Vec<Var<'t, T>> = batch.grids.iter().map(|g| tape.constant(g.clone())).collect();
    model.forward(tape, images, &grids)
}

/// One forward / hybrid loss / backward / AdamW cycle on the trainable
/// parameters.
pub fn seg_train_step<T: Element, M: Segmenter<T>>(
    model: &mut M,
    opt: &mut AdamW<T>,
    batch: &SegBatch<T>,
    loss_cfg: &HybridLossConfig,
) -> Result<LossParts> {
    let step = opt.step_count() + 1;
    let diverged = |e: Error| match e {
        Error::NonFinite { op } => Error::Diverged {
            step,
            batch: batch.ids.clone(),
            detail: format!("non-finite value from {op}"),
        },
        other => other,
    };
    let tape = Tape::new();
    let loss = forward(&tape, model, batch)
        .and_then(|logits| hybrid_loss(logits, &batch.labels, loss_cfg))
        .map_err(diverged)?;
    let parts = LossParts {
        total: loss.total.item(),
        dice: loss.dice,
        focal: loss.focal,
        ce: loss.ce,
    };
    let grads = tape.backward(loss.total).map_err(diverged)?;
    drop(tape);
    opt.step(model, &grads).map_err(diverged)?;
    Ok(parts)
}

/// Per-pixel argmax class (lowest index on ties), `[N, H, W]` row-major.
pub fn predict_labels<T: Element, M: Segmenter<T>>(model: &M, batch: &SegBatch<T>) -> Result<Vec<u16>> {
    let tape = Tape::new();
    let logits = forward(&tape, model, batch)?.value();
    let s = logits.shape();
    let (n, c, hw) = (s[0], s[1], s[2] * s[3]);
    let d = logits.data();
    let mut out = Vec::with_capacity(n * hw);
    for b in 0..n {
        for p in 0..hw {
            let mut best = 0;
            for k in 1..c {
                if d[(b * c + k) * hw + p] > d[(b * c + best) * hw + p] {
                    best = k;
                }
            }
            out.push(best as u16);
        }
    }
    Ok(out)
}
