use serde::{Deserialize, Serialize};

use super::{cross_entropy, FeatureNorm, LinearHead};
use crate::dataio::{augment, AugmentPolicy, CoverageWeighting, SliceRecord};
use crate::mae::{image_tensor, patchify_batch, MaeModel, MaskPlan};
use crate::nnkit::{AdamW, AdamWConfig, Element, Module, Rng, Tape, Tensor};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    pub n_per_class: usize,
    /// Augment training slices (never evaluation slices).
    pub augment: bool,
    /// Standardise features with statistics of the unaugmented training set.
    pub standardize: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            lr: 1e-4,
            weight_decay: 0.01,
            batch_size: 48,
            steps: 500,
            seed: 0,
            n_per_class: 30,
            augment: false,
            standardize: true,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.batch_size == 0 || self.steps == 0 || self.n_per_class == 0 {
            return Err(Error::Config(format!("probe settings must be positive: {self:?}")));
        }
        Ok(())
    }

    fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

const FEATURE_CHUNK: usize = 64;

/// Final-layer CLS embeddings `[N, D]` of the unmasked images. The encoder
/// must be frozen.
pub fn cls_features<T: Element>(mae: &MaeModel<T>, records: &[SliceRecord]) -> Result<Tensor<T>> {
    if mae.encoder.parameters().iter().any(|p| !p.frozen) {
        return Err(Error::Contract("cls_features requires a frozen encoder".into()));
    }
    let d = mae.config.enc_dim;
    let t = mae.config.num_patches();
    let mut out = Vec::with_capacity(records.len() * d);
    for chunk in records.chunks(FEATURE_CHUNK) {
        let images: Vec<Tensor<T>> = chunk.iter().map(image_tensor).collect();
        let patches = patchify_batch(&images, mae.config.patch_size)?;
        let plans = vec![MaskPlan::all_visible(t); chunk.len()];
        let tape = Tape::new();
        let enc = mae.encode(&tape, &patches, &plans)?;
        out.extend_from_slice(enc.last.narrow(1, 0, 1)?.value().data());
    }
    Tensor::new(vec![records.len(), d], out)
}

fn rows<T: Element>(features: &Tensor<T>, idx: &[usize]) -> Tensor<T> {
    let d = features.shape()[1];
    let mut data = Vec::with_capacity(idx.len() * d);
    for &i in idx {
        data.extend_from_slice(&features.data()[i * d..(i + 1) * d]);
    }
    Tensor::from_parts(vec![idx.len(), d], data)
}

fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::Data("probe training set is empty".into()));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Data(format!("label {y} out of range for {classes} classes")));
    }
    if labels.iter().all(|&y| y == labels[0]) {
        return Err(Error::Data("probe training set contains a single class".into()));
    }
    Ok(())
}

/// Epoch-wise shuffled mini-batches.
struct Batches {
    order: Vec<usize>,
    pos: usize,
    size: usize,
}

impl Batches {
    fn new(n: usize, size: usize) -> Self {
        Batches {
            order: (0..n).collect(),
            pos: n,
            size: size.min(n),
        }
    }

    fn next(&mut self, rng: &mut Rng) -> Vec<usize> {
        if self.pos + self.size > self.order.len() {
            rng.shuffle(&mut self.order);
            self.pos = 0;
        }
        let b = self.order[self.pos..self.pos + self.size].to_vec();
        self.pos += self.size;
        b
    }
}

fn head_step<T: Element>(head: &mut LinearHead<T>, opt: &mut AdamW<T>, x: Tensor<T>, y: &[usize]) -> Result<f64> {
    let tape = Tape::new();
    let logits = head.forward(&tape, tape.constant(x))?;
    let loss = cross_entropy(logits, y)?;
    let value = loss.item();
    let grads = tape.backward(loss)?;
    opt.step(head, &grads)?;
    Ok(value)
}

/// Trains a head on precomputed features. Returns the head and per-step
/// losses.
pub fn train_on_features<T: Element>(
    features: &Tensor<T>,
    labels: &[usize],
    class_names: Vec<String>,
    cfg: &ProbeConfig,
) -> Result<(LinearHead<T>, Vec<f64>)> {
    cfg.validate()?;
    check_labels(labels, class_names.len())?;
    if features.ndim() != 2 || features.shape()[0] != labels.len() {
        return Err(Error::shape(
            "train_on_features",
            format!("features {:?} for {} labels", features.shape(), labels.len()),
        ));
    }
    let mut head = LinearHead::new(features.shape()[1], class_names, &mut Rng::substream(cfg.seed, "init"))?;
    if cfg.standardize {
        head.norm = Some(FeatureNorm::fit(features)?);
    }
    let mut opt = AdamW::new(cfg.optimizer());
    let mut data_rng = Rng::substream(cfg.seed, "data");
    let mut batches = Batches::new(labels.len(), cfg.batch_size);
    let mut losses = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let idx = batches.next(&mut data_rng);
        let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        losses.push(head_step(&mut head, &mut opt, rows(features, &idx), &y)?);
    }
    Ok((head, losses))
}

fn record_labels(records: &[SliceRecord]) -> Result<Vec<usize>> {
    records
        .iter()
        .map(|r| {
            r.label.ok_or_else(|| {
                Error::Data(format!(
                    "slice {}:{}:{} has no class label",
                    r.source.subject_id, r.source.axis, r.source.index
                ))
            })
        })
        .collect()
}

/// Trains a linear probe on the frozen encoder's CLS features. With
/// `cfg.augment` every mini-batch is freshly augmented; otherwise features
/// are computed once.
pub fn train_linear_probe<T: Element>(
    records: &[SliceRecord],
    mae: &MaeModel<T>,
    class_names: Vec<String>,
    cfg: &ProbeConfig,
    policy: &AugmentPolicy,
) -> Result<(LinearHead<T>, Vec<f64>)> {
    let labels = record_labels(records)?;
    if !cfg.augment {
        let features = cls_features(mae, records)?;
        return train_on_features(&features, &labels, class_names, cfg);
    }
    cfg.validate()?;
    check_labels(&labels, class_names.len())?;
    let mut head = LinearHead::new(mae.config.enc_dim, class_names, &mut Rng::substream(cfg.seed, "init"))?;
    if cfg.standardize {
        head.norm = Some(FeatureNorm::fit(&cls_features(mae, records)?)?);
    }
    let mut opt = AdamW::new(cfg.optimizer());
    let mut data_rng = Rng::substream(cfg.seed, "data");
    let mut aug_rng = Rng::substream(cfg.seed, "augment");
    let coverage = CoverageWeighting::default();
    let mut batches = Batches::new(records.len(), cfg.batch_size);
    let mut losses = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let idx = batches.next(&mut data_rng);
        let batch = idx
            .iter()
            .map(|&i| augment(&records[i], policy, &coverage, &mut aug_rng))
            .collect::<Result<Vec<_>>>()?;
        let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        let x = cls_features(mae, &batch)?;
        losses.push(head_step(&mut head, &mut opt, x, &y)?);
    }
    Ok((head, losses))
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub class_names: Vec<String>,
    /// `None` when the class has no test samples.
    pub per_class: Vec<Option<f64>>,
    pub support: Vec<usize>,
    pub correct: usize,
    pub total: usize,
    pub predictions: Vec<usize>,
}

impl AccuracyReport {
    /// Micro-averaged accuracy.
    pub fn overall(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }

    /// Mean over classes present in the test set.
    pub fn macro_mean(&self) -> f64 {
        let present: Vec<f64> = self.per_class.iter().flatten().copied().collect();
        present.iter().sum::<f64>() / present.len().max(1) as f64
    }
}

pub fn evaluate_features<T: Element>(features: &Tensor<T>, labels: &[usize], head: &LinearHead<T>) -> Result<AccuracyReport> {
    if labels.is_empty() {
        return Err(Error::Data("test set is empty".into()));
    }
    let c = head.num_classes();
    let tape = Tape::new();
    let logits = head.forward(&tape, tape.constant(features.clone()))?.value();
    let mut hits = vec![0usize; c];
    let mut support = vec![0usize; c];
    let mut predictions = Vec::with_capacity(labels.len());
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::Data(format!("label {y} out of range for {c} classes")));
        }
        let row: Vec<f64> = logits.data()[i * c..(i + 1) * c].iter().map(|v| v.as_f64()).collect();
        let p = argmax(&row);
        predictions.push(p);
        support[y] += 1;
        if p == y {
            hits[y] += 1;
        }
    }
    Ok(AccuracyReport {
        class_names: head.class_names.clone(),
        per_class: (0..c)
            .map(|k| (support[k] > 0).then(|| hits[k] as f64 / support[k] as f64))
            .collect(),
        support,
        correct: hits.iter().sum(),
        total: labels.len(),
        predictions,
    })
}

/// Accuracy of the probe on unaugmented test slices.
pub fn evaluate_accuracy<T: Element>(records: &[SliceRecord], mae: &MaeModel<T>, head: &LinearHead<T>) -> Result<AccuracyReport> {
    if records.is_empty() {
        return Err(Error::Data("test set is empty".into()));
    }
    let labels = record_labels(records)?;
    evaluate_features(&cls_features(mae, records)?, &labels, head)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0]), 0);
    }

    #[test]
    fn separable_clusters_reach_full_accuracy() {
        let mut rng = Rng::new(11);
        let n = 40;
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let feats = Tensor::<f64>::from_fn(vec![n, 4], |k| {
            let (i, j) = (k / 4, k % 4);
            let center = if labels[i] == 0 { -1.0 } else { 1.0 };
            (if j == 0 { center } else { 0.0 }) + 0.2 * rng.normal()
        });
        let cfg = ProbeConfig {
            lr: 0.05,
            steps: 200,
            batch_size: 16,
            augment: false,
            ..ProbeConfig::default()
        };
        let (head, _) = train_on_features(&feats, &labels, vec!["a".into(), "b".into()], &cfg).unwrap();
        let rep = evaluate_features(&feats, &labels, &head).unwrap();
        assert_eq!(rep.overall(), 1.0);
    }

    #[test]
    fn single_class_rejected() {
        let feats = Tensor::<f64>::zeros(vec![3, 2]);
        let cfg = ProbeConfig::default();
        assert!(train_on_features(&feats, &[1, 1, 1], vec!["a".into(), "b".into()], &cfg).is_err());
    }
}
