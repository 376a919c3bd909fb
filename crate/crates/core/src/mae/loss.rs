use super::{LossNormalization, MaskPlan};
use crate::nnkit::{Element, Tensor, Var};
use crate::{Error, Result};

/// Per-token loss weights: `w_i / (|masked_i| · denom)` on masked tokens of
/// sample `i`, zero on visible ones.
pub fn masked_token_weights<T: Element>(
    plans: &[MaskPlan],
    weights: &[f64],
    t: usize,
    norm: LossNormalization,
) -> Result<Tensor<T>> {
    if plans.len() != weights.len() || plans.is_empty() {
        return Err(Error::Contract(format!(
            "{} mask plans but {} sample weights",
            plans.len(),
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(Error::Contract(format!("sample weight {w} outside [0,1]")));
    }
    let denom = match norm {
        LossNormalization::BatchSize => plans.len() as f64,
        LossNormalization::WeightSum => {
            let s: f64 = weights.iter().sum();
            if s <= 0.0 {
                return Err(Error::Contract("sample weights sum to zero".into()));
            }
            s
        }
    };
    let mut m = vec![T::zero(); plans.len() * t];
    for (i, (p, &w)) in plans.iter().zip(weights).enumerate() {
        if p.masked.is_empty() {
            return Err(Error::Contract(format!(
                "sample {i} has no masked patches; its reconstruction loss is undefined"
            )));
        }
        let c = T::from_f64(w / (p.masked.len() as f64 * denom));
        for &j in &p.masked {
            if j >= t {
                return Err(Error::Contract(format!("masked index {j} out of range for {t} tokens")));
            }
            m[i * t + j] = c;
        }
    }
    Tensor::new(vec![plans.len(), t], m)
}

/// Sample-weighted masked reconstruction loss
/// `L = (1/N) Σ_i w_i · mean_{masked j} mean_pixels (pred - target)²`.
pub fn weighted_recon_loss<'t, T: Element>(
    pred: Var<'t, T>,
    target: &Tensor<T>,
    plans: &[MaskPlan],
    weights: &[f64],
    norm: LossNormalization,
) -> Result<Var<'t, T>> {
    let s = pred.shape();
    if s.len() != 3 || s != target.shape() {
        return Err(Error::shape(
            "weighted_recon_loss",
            format!("prediction {s:?} vs target {:?}", target.shape()),
        ));
    }
    let tape = pred.tape();
    let m = masked_token_weights::<T>(plans, weights, s[1], norm)?;
    let per_token = pred.sub(tape.constant(target.clone()))?.square()?.mean_last()?;
    per_token.mul(tape.constant(m))?.sum_all()
}

/// Plain per-sample masked MSE values, for reporting.
pub fn masked_mse_per_sample<T: Element>(pred: &Tensor<T>, target: &Tensor<T>, plans: &[MaskPlan]) -> Vec<f64> {
    let s = pred.shape();
    let (t, d) = (s[1], s[2]);
    plans
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let total: f64 = p
                .masked
                .iter()
                .map(|&j| {
                    let off = (i * t + j) * d;
                    (0..d)
                        .map(|k| (pred.data()[off + k].as_f64() - target.data()[off + k].as_f64()).powi(2))
                        .sum::<f64>()
                        / d as f64
                })
                .sum();
            total / p.masked.len().max(1) as f64
        })
        .collect()
}
