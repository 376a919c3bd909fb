//! Synthetic desk-scale datasets written as raw-sidecar volumes with JSONL
//! manifests.

use std::path::{Path, PathBuf};

use maefuse_core::dataio::synth::{phantom_volume, ring_slice, shapes_slice, texture_slice, PHANTOM_TISSUES};
use maefuse_core::dataio::{write_manifest, write_raw_volume, LabelRef, ManifestEntry, Modality, Plane, Volume};
use maefuse_core::Rng;

use crate::error::{io_at, CliError, Result};

pub const TEXTURE_CLASSES: [&str; 3] = ["horizontal", "vertical", "checker"];
pub const PHANTOM_MODALITIES: [Modality; 3] = [Modality::T1, Modality::T2, Modality::Flair];

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SynthKind {
    /// Oriented texture slices, one class per volume.
    Textures,
    /// Disk, ellipse and ring images with binary label maps.
    Shapes,
    /// Head phantoms in several modalities with tissue labels and brain masks.
    Phantom,
}

#[derive(Clone, Debug)]
pub struct SynthOptions {
    pub kind: SynthKind,
    pub out: PathBuf,
    /// Training volumes per class (textures, phantom) or in total (shapes).
    pub volumes: usize,
    pub eval_volumes: usize,
    pub slices: usize,
    pub size: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthSummary {
    pub train_manifest: PathBuf,
    pub eval_manifest: PathBuf,
    pub train_entries: usize,
    pub eval_entries: usize,
}

/// Foreground region names matching the label maps of a synthetic kind.
pub fn region_names(kind: SynthKind) -> Vec<String> {
    match kind {
        SynthKind::Phantom => PHANTOM_TISSUES[1..].iter().map(|s| s.to_string()).collect(),
        _ => vec!["Foreground".into()],
    }
}

fn stack(planes: &[Plane], size: usize) -> Result<Volume> {
    let data = planes.iter().flat_map(|p| p.data.iter().copied()).collect();
    Ok(Volume::new([size, size, planes.len()], [1.0; 3], data)?)
}

struct Writer<'a> {
    root: &'a Path,
    split: &'static str,
    entries: Vec<ManifestEntry>,
}

impl Writer<'_> {
    fn volume(&self, name: &str, v: &Volume) -> Result<String> {
        let rel = format!("{}/{name}.json", self.split);
        write_raw_volume(v, &self.root.join(&rel))?;
        Ok(rel)
    }

    fn slices(&mut self, path: &str, n: usize, label: Option<&str>, mask: Option<&str>, brain: Option<&str>, tag: &str) {
        for index in 0..n {
            self.entries.push(ManifestEntry {
                path: path.into(),
                axis: 2,
                index,
                label: label.map(|l| LabelRef::Name(l.into())),
                mask_path: mask.map(String::from),
                brain_mask_path: brain.map(String::from),
                dataset_tag: tag.into(),
            });
        }
    }
}

fn write_split(opts: &SynthOptions, split: &'static str, volumes: usize, rng: &mut Rng) -> Result<Vec<ManifestEntry>> {
    let dir = opts.out.join(split);
    std::fs::create_dir_all(&dir).map_err(io_at(&dir))?;
    let mut w = Writer {
        root: &opts.out,
        split,
        entries: Vec::new(),
    };
    let (n, size) = (opts.slices, opts.size);
    match opts.kind {
        SynthKind::Textures => {
            for v in 0..volumes {
                for (c, name) in TEXTURE_CLASSES.iter().enumerate() {
                    let planes: Vec<Plane> = (0..n).map(|_| texture_slice(c, size, rng)).collect();
                    let path = w.volume(&format!("{name}-{v:02}"), &stack(&planes, size)?)?;
                    w.slices(&path, n, Some(name), None, None, "textures");
                }
            }
        }
        SynthKind::Shapes => {
            for v in 0..volumes {
                let (planes, masks): (Vec<Plane>, Vec<Plane>) = (0..n)
                    .map(|i| {
                        let (img, mask) = if i % 4 == 3 { ring_slice(size, rng) } else { shapes_slice(size, rng) };
                        let mask = Plane {
                            height: size,
                            width: size,
                            data: mask.data.iter().map(|&l| l as f32).collect(),
                        };
                        (img, mask)
                    })
                    .unzip();
                let name = format!("shapes-{v:02}");
                let path = w.volume(&name, &stack(&planes, size)?)?;
                let mask = w.volume(&format!("{name}-mask"), &stack(&masks, size)?)?;
                w.slices(&path, n, None, Some(&mask), None, "shapes");
            }
        }
        SynthKind::Phantom => {
            for v in 0..volumes {
                for m in PHANTOM_MODALITIES {
                    let (img, labels, brain) = phantom_volume([size, size, n], [1.0; 3], m, rng);
                    let name = format!("{}-{v:02}", m.as_str().to_lowercase());
                    let path = w.volume(&name, &img)?;
                    let labels = w.volume(&format!("{name}-labels"), &labels)?;
                    let brain = w.volume(&format!("{name}-brain"), &brain)?;
                    w.slices(&path, n, Some(m.as_str()), Some(&labels), Some(&brain), "phantom");
                }
            }
        }
    }
    Ok(w.entries)
}

/// Writes `train/` and `eval/` volumes plus `train.jsonl` and `eval.jsonl`
/// under `opts.out`. Manifest paths are relative to `opts.out`.
pub fn run_synth(opts: &SynthOptions) -> Result<SynthSummary> {
    if opts.volumes == 0 || opts.slices == 0 || opts.size < 4 {
        return Err(CliError::Config(format!(
            "synth needs volumes >= 1, slices >= 1 and size >= 4 (got {}, {}, {})",
            opts.volumes, opts.slices, opts.size
        )));
    }
    std::fs::create_dir_all(&opts.out).map_err(io_at(&opts.out))?;
    let mut train_rng = Rng::substream(opts.seed, "synth.train");
    let mut eval_rng = Rng::substream(opts.seed, "synth.eval");
    let train = write_split(opts, "train", opts.volumes, &mut train_rng)?;
    let eval = if opts.eval_volumes > 0 {
        write_split(opts, "eval", opts.eval_volumes, &mut eval_rng)?
    } else {
        Vec::new()
    };
    let summary = SynthSummary {
        train_manifest: opts.out.join("train.jsonl"),
        eval_manifest: opts.out.join("eval.jsonl"),
        train_entries: train.len(),
        eval_entries: eval.len(),
    };
    write_manifest(&summary.train_manifest, &train)?;
    write_manifest(&summary.eval_manifest, &eval)?;
    Ok(summary)
}
