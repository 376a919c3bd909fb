use maefuse_core::dataio::{first_volumes, SliceRecord};
use maefuse_core::funet::{
    predict_labels, prepare_seg_batch, seg_train_step, FunetConfig, FunetModel, FusionStrategy, MaeDirectHead, SegBatch,
    Segmenter,
};
use maefuse_core::mae::MaeModel;
use maefuse_core::metrics::{score_volumes, stability_summary, MulticlassReport};
use maefuse_core::nnkit::{AdamW, AdamWConfig};
use maefuse_core::Rng;

use super::{
    class_names, frozen_mae, load, load_index, positions, prepare_output, stride_filter, training_subset,
    write_run_manifest, RunOutcome,
};
use crate::config::{ExperimentConfig, SegmenterKind};
use crate::error::{CliError, Result};
use crate::report::{emit_report, percent, Report};

/// One training run of a sweep.
struct Run {
    key: String,
    subset: Vec<usize>,
    strategy: FusionStrategy,
}

struct Scored {
    report: MulticlassReport,
    trainable: usize,
}

/// Evaluation slices grouped by volume, in manifest order.
fn volume_groups(records: &[SliceRecord]) -> Vec<Vec<usize>> {
    let mut ids: Vec<&str> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        match ids.iter().position(|&s| s == r.source.subject_id) {
            Some(g) => groups[g].push(i),
            None => {
                ids.push(&r.source.subject_id);
                groups.push(vec![i]);
            }
        }
    }
    groups
}

struct Eval<'a> {
    batch: &'a SegBatch<f32>,
    groups: &'a [Vec<usize>],
    names: &'a [String],
}

fn fit_and_score<M: Segmenter<f32>>(mut model: M, cfg: &ExperimentConfig, train: &SegBatch<f32>, eval: &Eval) -> Result<Scored> {
    let mut opt = AdamW::new(AdamWConfig {
        lr: cfg.optim.lr,
        weight_decay: cfg.optim.weight_decay,
        ..AdamWConfig::default()
    });
    let mut data_rng = Rng::substream(cfg.seed, "data");
    let batch_size = cfg.optim.batch_size.min(train.len());
    for _ in 0..cfg.optim.steps {
        let idx = data_rng.choose_indices(train.len(), batch_size);
        seg_train_step(&mut model, &mut opt, &train.select(&idx), &cfg.segment.loss)?;
    }
    let n = eval.batch.len();
    let hw = eval.batch.labels.len() / n;
    let mut preds = Vec::with_capacity(n * hw);
    let all: Vec<usize> = (0..n).collect();
    for chunk in all.chunks(cfg.segment.eval_batch) {
        preds.extend(predict_labels(&model, &eval.batch.select(chunk))?);
    }
    let units: Vec<Vec<(Vec<u16>, Vec<u16>)>> = eval
        .groups
        .iter()
        .map(|g| {
            g.iter()
                .map(|&i| {
                    let gt = eval.batch.labels[i * hw..(i + 1) * hw].iter().map(|&l| l as u16).collect();
                    (preds[i * hw..(i + 1) * hw].to_vec(), gt)
                })
                .collect()
        })
        .collect();
    Ok(Scored {
        report: score_volumes(&units, eval.names, cfg.segment.scoring)?,
        trainable: model.num_trainable(),
    })
}

fn grid_layers(kind: SegmenterKind, funet: &FunetConfig, mae: &MaeModel<f32>) -> Vec<usize> {
    match kind {
        SegmenterKind::Funet => (0..=funet.depth).map(|k| funet.layer_for_point(k)).collect(),
        SegmenterKind::MaeDirect => vec![mae.config.enc_layers],
    }
}

fn model_label(kind: SegmenterKind, strategy: FusionStrategy) -> String {
    match kind {
        SegmenterKind::Funet => format!("MAE-FUnet-{}", strategy.as_str()),
        SegmenterKind::MaeDirect => "MAE-direct".into(),
    }
}

/// Trains segmenters over the configured sweep and reports per-region IoU
/// and Dice, with mean and standard deviation rows for stride and sample
/// sweeps.
pub fn run_segment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    prepare_output(cfg)?;
    let mae = frozen_mae(cfg)?.model;
    let names = cfg.segment.region_names()?;
    let num_classes = names.len() + 1;
    let mut funet = cfg.funet_config()?;
    funet.num_classes = num_classes;
    funet.image_size = mae.config.image_size;
    funet.validate(mae.config.enc_layers, mae.config.grid())?;
    let kind = cfg.model.segmenter;

    let classes = class_names(cfg)?;
    let eval_manifest = cfg.data.eval_manifest.as_deref().expect("validated");
    let full = load_index(&cfg.data.manifest, &classes)?;
    let eval_index = load_index(eval_manifest, &classes)?;
    let size = mae.config.image_size;
    let train_records = load(cfg, &full, &cfg.data.manifest, size, Some(num_classes))?;
    let eval_records = load(cfg, &eval_index, eval_manifest, size, Some(num_classes))?;
    let layers = grid_layers(kind, &funet, &mae);
    let train_batch = prepare_seg_batch(&train_records, &mae, &layers, num_classes)?;
    let eval_batch = prepare_seg_batch(&eval_records, &mae, &layers, num_classes)?;
    let groups = volume_groups(&eval_records);
    let eval = Eval {
        batch: &eval_batch,
        groups: &groups,
        names: &names,
    };

    let seg = &cfg.segment;
    let base = positions(&full, &training_subset(cfg, &full));
    let strategy = funet.fusion_strategy;
    let (key_name, runs): (&str, Vec<Run>) = if !seg.strides.is_empty() {
        let runs = seg
            .strides
            .iter()
            .map(|&k| Run {
                key: k.to_string(),
                subset: positions(&full, &stride_filter(&full, k)),
                strategy,
            })
            .collect();
        ("stride", runs)
    } else if !seg.sample_sizes.is_empty() {
        let runs = seg
            .sample_sizes
            .iter()
            .map(|&n| Run {
                key: n.to_string(),
                subset: positions(&full, &first_volumes(&full, n)),
                strategy,
            })
            .collect();
        ("sample_size", runs)
    } else if !seg.strategies.is_empty() {
        let runs = seg
            .strategies
            .iter()
            .map(|&s| Run {
                key: model_label(kind, s),
                subset: base.clone(),
                strategy: s,
            })
            .collect();
        ("model", runs)
    } else {
        let run = Run {
            key: model_label(kind, strategy),
            subset: base,
            strategy,
        };
        ("model", vec![run])
    };

    let mut columns = vec![key_name.to_string()];
    for n in &names {
        columns.push(format!("{n} IoU"));
        columns.push(format!("{n} Dice"));
    }
    let with_means = names.len() > 1;
    if with_means {
        columns.extend(["mean IoU".to_string(), "mean Dice".to_string()]);
    }
    columns.push("trainable_params".into());
    let mut report = Report::new(columns);
    let mut values: Vec<Vec<f64>> = Vec::new();
    let mut trainable = 0;
    for run in &runs {
        if run.subset.is_empty() {
            return Err(CliError::Config(format!("{key_name} {} selects no training slices", run.key)));
        }
        let train = train_batch.select(&run.subset);
        let mut init = Rng::substream(cfg.seed, "init");
        let scored = match kind {
            SegmenterKind::Funet => {
                let c = FunetConfig {
                    fusion_strategy: run.strategy,
                    ..funet.clone()
                };
                let model = FunetModel::new(c, mae.config.enc_layers, mae.config.enc_dim, mae.config.grid(), &mut init)?;
                fit_and_score(model, cfg, &train, &eval)?
            }
            SegmenterKind::MaeDirect => {
                let model = MaeDirectHead::new(
                    mae.config.enc_layers,
                    mae.config.enc_dim,
                    funet.base_width,
                    num_classes,
                    size,
                    &mut init,
                )?;
                fit_and_score(model, cfg, &train, &eval)?
            }
        };
        let mut v = Vec::new();
        for r in &scored.report.regions {
            v.extend([100.0 * r.iou, 100.0 * r.dice]);
        }
        if with_means {
            v.extend([100.0 * scored.report.mean_iou, 100.0 * scored.report.mean_dice]);
        }
        let mut row = vec![run.key.clone()];
        row.extend(v.iter().map(|x| percent(x / 100.0)));
        row.push(scored.trainable.to_string());
        report.push(row)?;
        values.push(v);
        trainable = scored.trainable;
    }
    if key_name != "model" && values.len() >= 2 {
        let mut mean_row = vec!["Mean".to_string()];
        let mut std_row = vec!["STD (%)".to_string()];
        for j in 0..values[0].len() {
            let points: Vec<(String, f64)> = runs.iter().zip(&values).map(|(r, v)| (r.key.clone(), v[j])).collect();
            let s = stability_summary(key_name, &points)?;
            mean_row.push(format!("{:.2}", s.mean));
            std_row.push(format!("{:.3}", s.std));
        }
        mean_row.push(String::new());
        std_row.push(String::new());
        report.push(mean_row)?;
        report.push(std_row)?;
    }
    emit_report(&cfg.output_dir, &report)?;
    write_run_manifest(cfg, trainable)?;
    Ok(RunOutcome {
        output_dir: cfg.output_dir.clone(),
        trainable_params: trainable,
        summary: format!("{} segmentation run(s) over {} region(s)", runs.len(), names.len()),
    })
}
