use maefuse_core::classify::{cls_features, evaluate_features, train_linear_probe, train_on_features, ProbeConfig};
use maefuse_core::dataio::{few_shot_sample, SliceRecord};
use maefuse_core::{Module, Rng, Tensor};

use super::{
    class_names, frozen_mae, load, load_index, positions, prepare_output, training_subset, write_run_manifest,
    RunOutcome, FIG4_CSV,
};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::report::{emit_report, percent, write_text, Report};

fn labels(records: &[SliceRecord], what: &str) -> Result<Vec<usize>> {
    records
        .iter()
        .map(|r| {
            r.label.ok_or_else(|| {
                CliError::Config(format!(
                    "{what} slice {}:{}:{} has no class label",
                    r.source.subject_id, r.source.axis, r.source.index
                ))
            })
        })
        .collect()
}

fn select_rows(features: &Tensor<f32>, idx: &[usize]) -> Result<Tensor<f32>> {
    let d = features.shape()[1];
    let mut data = Vec::with_capacity(idx.len() * d);
    for &i in idx {
        data.extend_from_slice(&features.data()[i * d..(i + 1) * d]);
    }
    Ok(Tensor::new(vec![idx.len(), d], data)?)
}

/// Trains a linear probe per few-shot size and reports held-out accuracy
/// per class.
pub fn run_classify(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    prepare_output(cfg)?;
    let mae = frozen_mae(cfg)?.model;
    let classes = class_names(cfg)?;
    if classes.len() < 2 {
        return Err(CliError::Config(format!("classification needs >= 2 classes, found {classes:?}")));
    }
    let eval_manifest = cfg.data.eval_manifest.as_deref().expect("validated");
    let train_index = training_subset(cfg, &load_index(&cfg.data.manifest, &classes)?);
    let eval_index = load_index(eval_manifest, &classes)?;
    let size = mae.config.image_size;
    let train_records = load(cfg, &train_index, &cfg.data.manifest, size, None)?;
    let eval_records = load(cfg, &eval_index, eval_manifest, size, None)?;
    let train_labels = labels(&train_records, "training")?;
    let eval_labels = labels(&eval_records, "evaluation")?;
    let train_features = if cfg.data.augment {
        None
    } else {
        Some(cls_features(&mae, &train_records)?)
    };
    let eval_features = cls_features(&mae, &eval_records)?;

    let sizes = if cfg.classify.sweep.is_empty() {
        vec![cfg.data.n_per_class.unwrap_or(ProbeConfig::default().n_per_class)]
    } else {
        cfg.classify.sweep.clone()
    };
    let mut columns = vec!["n_per_class".to_string()];
    columns.extend(classes.iter().cloned());
    columns.extend(["overall".to_string(), "trainable_params".to_string()]);
    let mut report = Report::new(columns);
    let mut fig4 = Report::new(vec!["n_per_class".into(), "accuracy".into()]);
    let mut trainable = 0;
    let mut last = 0.0;
    for &n in &sizes {
        let sampled = few_shot_sample(&train_index, n, &mut Rng::substream(cfg.seed, "data"))?;
        let idx = positions(&train_index, &sampled);
        let probe = ProbeConfig {
            lr: cfg.optim.lr,
            weight_decay: cfg.optim.weight_decay,
            batch_size: cfg.optim.batch_size,
            steps: cfg.optim.steps,
            seed: cfg.seed,
            n_per_class: n,
            augment: cfg.data.augment,
            standardize: cfg.classify.standardize,
        };
        let head = match &train_features {
            Some(f) => {
                let y: Vec<usize> = idx.iter().map(|&i| train_labels[i]).collect();
                train_on_features(&select_rows(f, &idx)?, &y, classes.clone(), &probe)?.0
            }
            None => {
                let subset: Vec<SliceRecord> = idx.iter().map(|&i| train_records[i].clone()).collect();
                train_linear_probe(&subset, &mae, classes.clone(), &probe, &cfg.data.augment_policy)?.0
            }
        };
        let acc = evaluate_features(&eval_features, &eval_labels, &head)?;
        trainable = head.num_trainable();
        last = acc.overall();
        let mut row = vec![n.to_string()];
        row.extend(acc.per_class.iter().map(|a| a.map(percent).unwrap_or_default()));
        row.extend([percent(acc.overall()), trainable.to_string()]);
        report.push(row)?;
        fig4.push(vec![n.to_string(), percent(acc.overall())])?;
    }
    emit_report(&cfg.output_dir, &report)?;
    if !cfg.classify.sweep.is_empty() {
        write_text(&cfg.output_dir.join(FIG4_CSV), &fig4.to_csv()?)?;
    }
    write_run_manifest(cfg, trainable)?;
    Ok(RunOutcome {
        output_dir: cfg.output_dir.clone(),
        trainable_params: trainable,
        summary: format!("probe accuracy {}% at n = {}", percent(last), sizes[sizes.len() - 1]),
    })
}
