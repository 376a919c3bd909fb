use serde::{Deserialize, Serialize};

use crate::nnkit::{Element, Tensor, Var};
use crate::{Error, Result};

pub const DICE_EPS: f64 = 1e-5;
pub const PROB_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HybridLossConfig {
    pub lambda_dice: f64,
    pub lambda_focal: f64,
    pub lambda_ce: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub dice_eps: f64,
}

impl Default for HybridLossConfig {
    fn default() -> Self {
        HybridLossConfig {
            lambda_dice: 1.0,
            lambda_focal: 1.0,
            lambda_ce: 1.0,
            gamma: 2.0,
            alpha: 0.25,
            dice_eps: DICE_EPS,
        }
    }
}

impl HybridLossConfig {
    pub fn validate(&self) -> Result<()> {
        let l = [self.lambda_dice, self.lambda_focal, self.lambda_ce];
        if l.iter().any(|v| !(*v >= 0.0)) || !(self.gamma >= 0.0) || !(self.alpha > 0.0) || !(self.dice_eps > 0.0) {
            return Err(Error::Config(format!("invalid segmentation loss settings {self:?}")));
        }
        Ok(())
    }
}

/// One-hot encoding of `labels` (`[N, H, W]` row-major) as `[N, C, H, W]`.
pub fn one_hot<T: Element>(labels: &[usize], n: usize, c: usize, h: usize, w: usize) -> Result<Tensor<T>> {
    if labels.len() != n * h * w {
        return Err(Error::shape("one_hot", format!("{} labels for [{n}, {h}, {w}]", labels.len())));
    }
    let hw = h * w;
    let mut out = vec![T::zero(); n * c * hw];
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::Contract(format!("label {y} out of range for {c} classes")));
        }
        let (b, p) = (i / hw, i % hw);
        out[(b * c + y) * hw + p] = T::one();
    }
    Tensor::new(vec![n, c, h, w], out)
}

fn nchw(op: &'static str, probs: &Var<'_, impl Element>) -> Result<(usize, usize, usize, usize)> {
    match probs.shape()[..] {
        [n, c, h, w] => Ok((n, c, h, w)),
        ref s => Err(Error::shape(op, format!("expected [N, C, H, W], got {s:?}"))),
    }
}

/// Soft Dice loss per sample and class,
/// `1 - (2Σ p·g + ε) / (Σ p² + Σ g² + ε)`, averaged over classes (background
/// included) and then over samples.
pub fn dice_loss<'t, T: Element>(probs: Var<'t, T>, onehot: &Tensor<T>, eps: f64) -> Result<Var<'t, T>> {
    let (n, c, h, w) = nchw("dice_loss", &probs)?;
    if onehot.shape() != [n, c, h, w] {
        return Err(Error::shape("dice_loss", format!("probs {:?} vs one-hot {:?}", probs.shape(), onehot.shape())));
    }
    let tape = probs.tape();
    let g = tape.constant(onehot.clone());
    let inter = probs.mul(g)?.reshape(vec![n * c, h * w])?.sum_last()?;
    let psq = probs.square()?.reshape(vec![n * c, h * w])?.sum_last()?;
    let gsq: Vec<T> = onehot
        .data()
        .chunks(h * w)
        .map(|ch| T::from_f64(ch.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>() + eps))
        .collect();
    let num = inter.scale(2.0)?.add_scalar(eps)?;
    let den = psq.add(tape.constant(Tensor::new(vec![n * c], gsq)?))?;
    num.div(den)?.mean_all()?.neg()?.add_scalar(1.0)
}

fn true_class_probs<'t, T: Element>(op: &'static str, probs: Var<'t, T>, labels: &[usize]) -> Result<Var<'t, T>> {
    let (n, _, h, w) = nchw(op, &probs)?;
    if labels.len() != n * h * w {
        return Err(Error::shape(op, format!("{} labels for [{n}, {h}, {w}] pixels", labels.len())));
    }
    probs.pick(1, labels)?.clamp_min(PROB_FLOOR)
}

/// Mean over pixels of `-α (1 - p_t)^γ ln p_t`.
pub fn focal_loss<'t, T: Element>(probs: Var<'t, T>, labels: &[usize], gamma: f64, alpha: f64) -> Result<Var<'t, T>> {
    let pt = true_class_probs("focal_loss", probs, labels)?;
    let modulator = pt.neg()?.add_scalar(1.0)?.powf(gamma)?;
    modulator.mul(pt.ln()?)?.mean_all()?.scale(-alpha)
}

/// Mean over pixels of `-ln p_t`.
pub fn pixel_ce<'t, T: Element>(probs: Var<'t, T>, labels: &[usize]) -> Result<Var<'t, T>> {
    true_class_probs("pixel_ce", probs, labels)?.ln()?.mean_all()?.neg()
}

/// Total and per-term values of the hybrid loss.
pub struct HybridLoss<'t, T: Element> {
    pub total: Var<'t, T>,
    pub dice: f64,
    pub focal: f64,
    pub ce: f64,
}

/// `λ_d·Dice + λ_f·Focal + λ_c·CE` over one shared softmax of `logits`.
pub fn hybrid_loss<'t, T: Element>(logits: Var<'t, T>, labels: &[usize], cfg: &HybridLossConfig) -> Result<HybridLoss<'t, T>> {
    cfg.validate()?;
    let (n, c, h, w) = nchw("hybrid_loss", &logits)?;
    let probs = logits.softmax(1)?;
    let onehot = one_hot::<T>(labels, n, c, h, w)?;
    let dice = dice_loss(probs, &onehot, cfg.dice_eps)?;
    let focal = focal_loss(probs, labels, cfg.gamma, cfg.alpha)?;
    let ce = pixel_ce(probs, labels)?;
    let total = dice
        .scale(cfg.lambda_dice)?
        .add(focal.scale(cfg.lambda_focal)?)?
        .add(ce.scale(cfg.lambda_ce)?)?;
    Ok(HybridLoss {
        total,
        dice: dice.item(),
        focal: focal.item(),
        ce: ce.item(),
    })
}
