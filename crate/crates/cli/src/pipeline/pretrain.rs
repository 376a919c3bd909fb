use std::collections::BTreeMap;

use maefuse_core::dataio::{augment, SliceRecord};
use maefuse_core::mae::{pretrain_step, MaeModel};
use maefuse_core::nnkit::{AdamW, AdamWConfig};
use maefuse_core::{Module, Rng};

use super::{class_names, load, load_index, prepare_output, training_subset, write_run_manifest, RunOutcome, LOSS_LOG};
use crate::checkpoint::{load_checkpoint, manifest_path, save_checkpoint, stream, Checkpoint, FILE_NAME};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::report::write_text;

fn optimizer_config(cfg: &ExperimentConfig) -> AdamWConfig {
    AdamWConfig {
        lr: cfg.optim.lr,
        weight_decay: cfg.optim.weight_decay,
        ..AdamWConfig::default()
    }
}

/// Runs `optim.steps` pretraining steps, resuming from `checkpoint` when
/// one is configured, and writes the loss log and a new checkpoint.
pub fn run_pretrain(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    prepare_output(cfg)?;
    let mae_cfg = cfg.mae_config()?;
    let (mut model, mut opt, rngs) = match &cfg.checkpoint {
        Some(path) => {
            let ck = load_checkpoint(&manifest_path(path))?;
            if ck.model.config != mae_cfg {
                return Err(CliError::Config(
                    "the checkpoint's MAE settings differ from the configured model".into(),
                ));
            }
            let mut opt = ck.optimizer.unwrap_or_else(|| AdamW::new(optimizer_config(cfg)));
            opt.config = optimizer_config(cfg);
            (ck.model, opt, ck.rng)
        }
        None => {
            let model = MaeModel::new(mae_cfg, &mut Rng::substream(cfg.seed, "init"))?;
            (model, AdamW::new(optimizer_config(cfg)), BTreeMap::new())
        }
    };
    let mut data_rng = stream(&rngs, cfg.seed, "data");
    let mut mask_rng = stream(&rngs, cfg.seed, "mask");
    let mut aug_rng = stream(&rngs, cfg.seed, "augment");

    let classes = class_names(cfg)?;
    let index = training_subset(cfg, &load_index(&cfg.data.manifest, &classes)?);
    let records = load(cfg, &index, &cfg.data.manifest, model.config.image_size, None)?;
    let batch_size = cfg.optim.batch_size.min(records.len());

    let log_path = cfg.output_dir.join(LOSS_LOG);
    let mut log = String::from("step,loss\n");
    let mut last = None;
    for _ in 0..cfg.optim.steps {
        let idx = data_rng.choose_indices(records.len(), batch_size);
        let batch = if cfg.data.augment {
            idx.iter()
                .map(|&i| augment(&records[i], &cfg.data.augment_policy, &cfg.data.coverage, &mut aug_rng))
                .collect::<maefuse_core::Result<Vec<SliceRecord>>>()?
        } else {
            idx.iter().map(|&i| records[i].clone()).collect()
        };
        match pretrain_step(&mut model, &mut opt, &batch, &mut mask_rng) {
            Ok(loss) => {
                log.push_str(&format!("{},{loss}\n", opt.step_count()));
                last = Some(loss);
            }
            Err(e) => {
                write_text(&log_path, &log)?;
                return Err(e.into());
            }
        }
    }
    write_text(&log_path, &log)?;

    let rng = BTreeMap::from([
        ("augment".to_string(), aug_rng.state()),
        ("data".to_string(), data_rng.state()),
        ("mask".to_string(), mask_rng.state()),
    ]);
    let trainable = model.num_trainable();
    let step = opt.step_count();
    let ck = Checkpoint {
        config: serde_json::to_value(cfg)?,
        model,
        optimizer: Some(opt),
        rng,
        step,
    };
    save_checkpoint(&ck, &cfg.output_dir.join(FILE_NAME))?;
    write_run_manifest(cfg, trainable)?;
    Ok(RunOutcome {
        output_dir: cfg.output_dir.clone(),
        trainable_params: trainable,
        summary: match last {
            Some(l) => format!("pretrained to step {step}, last loss {l:.6}"),
            None => format!("saved the model at step {step}"),
        },
    })
}
