use crate::nnkit::{Element, Var};
use crate::{Error, Result};

/// `-z_y + log Σ_j exp(z_j)` with max subtraction.
pub fn cross_entropy_value(logits: &[f64], y: usize) -> Result<f64> {
    if y >= logits.len() {
        return Err(Error::Contract(format!("label {y} out of range for {} classes", logits.len())));
    }
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    Ok(lse - logits[y])
}

/// Mean cross-entropy of `logits: [N, C]` against `labels`.
pub fn cross_entropy<'t, T: Element>(logits: Var<'t, T>, labels: &[usize]) -> Result<Var<'t, T>> {
    let s = logits.shape();
    if s.len() != 2 || s[0] != labels.len() {
        return Err(Error::shape(
            "cross_entropy",
            format!("logits {s:?} for {} labels", labels.len()),
        ));
    }
    logits.log_softmax(1)?.pick(1, labels)?.mean_all()?.neg()
}
