use serde::{Deserialize, Serialize};

use super::OverlapCounts;
use crate::{Error, Result};

/// Anatomical regions of the 13-class whole-brain preset.
pub const NACC_REGIONS: [&str; 13] = [
    "Cerebral White Matter",
    "Cerebral Cortex",
    "Cerebellum White Matter",
    "Cerebellum Cortex",
    "Thalamus",
    "Caudate",
    "Putamen",
    "Pallidum",
    "Brainstem",
    "Hippocampus",
    "Amygdala",
    "CSF",
    "WM-hypointensities",
];

/// Regions of the 8-class MRBrainS18 preset.
pub const MRBRAINS_REGIONS: [&str; 8] = [
    "Cortical gray matter",
    "Basal ganglia",
    "White matter",
    "White matter lesions",
    "Cerebrospinal fluid",
    "Ventricles",
    "Cerebellum",
    "Brain stem",
];

pub const SKULL_STRIP_REGIONS: [&str; 1] = ["Brain"];

/// Foreground region names of a named preset (`nacc`, `mrbrains`,
/// `skull_strip`).
pub fn region_preset(name: &str) -> Result<Vec<String>> {
    let names: &[&str] = match name {
        "nacc" => &NACC_REGIONS,
        "mrbrains" => &MRBRAINS_REGIONS,
        "skull_strip" => &SKULL_STRIP_REGIONS,
        other => return Err(Error::Config(format!("unknown region preset `{other}`"))),
    };
    Ok(names.iter().map(|s| s.to_string()).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub name: String,
    pub iou: f64,
    pub dice: f64,
    /// Reference pixel count.
    pub support: u64,
    /// Region absent from both prediction and reference.
    pub empty: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MulticlassReport {
    pub regions: Vec<RegionReport>,
    pub mean_iou: f64,
    pub mean_dice: f64,
}

/// Per-class overlap counts (class 0 is background and not scored).
#[derive(Clone, Debug, PartialEq)]
pub struct RegionAccumulator {
    counts: Vec<OverlapCounts>,
}

impl RegionAccumulator {
    pub fn new(num_classes: usize) -> Self {
        RegionAccumulator {
            counts: vec![OverlapCounts::default(); num_classes],
        }
    }

    pub fn add(&mut self, pred: &[u16], gt: &[u16]) -> Result<()> {
        if pred.len() != gt.len() {
            return Err(Error::shape(
                "multiclass_report",
                format!("prediction has {} pixels, reference {}", pred.len(), gt.len()),
            ));
        }
        let c = self.counts.len();
        for (&p, &g) in pred.iter().zip(gt) {
            if p as usize >= c || g as usize >= c {
                return Err(Error::Contract(format!("label {} out of range for {c} classes", p.max(g))));
            }
            if p == g {
                self.counts[p as usize].add(true, true);
            } else {
                self.counts[p as usize].add(true, false);
                self.counts[g as usize].add(false, true);
            }
        }
        Ok(())
    }

    pub fn counts(&self) -> &[OverlapCounts] {
        &self.counts
    }

    /// Scores classes `1..C` under the given names.
    pub fn report(&self, names: &[String]) -> Result<MulticlassReport> {
        if names.len() + 1 != self.counts.len() {
            return Err(Error::Config(format!(
                "{} region names for {} foreground classes",
                names.len(),
                self.counts.len() - 1
            )));
        }
        let regions: Vec<RegionReport> = names
            .iter()
            .zip(&self.counts[1..])
            .map(|(n, c)| RegionReport {
                name: n.clone(),
                iou: c.iou(),
                dice: c.dice(),
                support: c.gt,
                empty: c.is_empty(),
            })
            .collect();
        Ok(summarize(regions))
    }
}

fn summarize(regions: Vec<RegionReport>) -> MulticlassReport {
    let k = regions.len().max(1) as f64;
    MulticlassReport {
        mean_iou: regions.iter().map(|r| r.iou).sum::<f64>() / k,
        mean_dice: regions.iter().map(|r| r.dice).sum::<f64>() / k,
        regions,
    }
}

/// Binarizes every foreground class and scores it; the mean row averages
/// foreground regions without weighting.
pub fn multiclass_report(pred: &[u16], gt: &[u16], names: &[String]) -> Result<MulticlassReport> {
    let mut acc = RegionAccumulator::new(names.len() + 1);
    acc.add(pred, gt)?;
    acc.report(names)
}

/// How slice predictions are aggregated into scores.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scoring {
    /// Pool counts over each volume's slices, score per volume, then average.
    #[default]
    PerVolume,
    /// Score each slice, then average.
    PerSlice,
}

/// Scores groups of `(pred, gt)` slices (one group per volume) and
/// averages the per-unit reports. A region is flagged empty only if it is
/// empty in every unit.
pub fn score_volumes(volumes: &[Vec<(Vec<u16>, Vec<u16>)>], names: &[String], scoring: Scoring) -> Result<MulticlassReport> {
    let mut units = Vec::new();
    for vol in volumes {
        match scoring {
            Scoring::PerVolume => {
                let mut acc = RegionAccumulator::new(names.len() + 1);
                for (p, g) in vol {
                    acc.add(p, g)?;
                }
                units.push(acc.report(names)?);
            }
            Scoring::PerSlice => {
                for (p, g) in vol {
                    units.push(multiclass_report(p, g, names)?);
                }
            }
        }
    }
    if units.is_empty() {
        return Err(Error::Data("nothing to score".into()));
    }
    let m = units.len() as f64;
    let regions = (0..names.len())
        .map(|r| RegionReport {
            name: names[r].clone(),
            iou: units.iter().map(|u| u.regions[r].iou).sum::<f64>() / m,
            dice: units.iter().map(|u| u.regions[r].dice).sum::<f64>() / m,
            support: units.iter().map(|u| u.regions[r].support).sum(),
            empty: units.iter().all(|u| u.regions[r].empty),
        })
        .collect();
    Ok(summarize(regions))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_empty_regions() {
        let names = region_preset("mrbrains").unwrap();
        let gt = vec![0, 1, 2, 2, 3, 1];
        let rep = multiclass_report(&gt, &gt, &names).unwrap();
        assert_eq!(rep.regions.len(), 8);
        assert!(rep.regions.iter().all(|r| r.dice == 1.0 && r.iou == 1.0));
        assert!(!rep.regions[0].empty);
        assert!(rep.regions[5].empty);
        assert_eq!(rep.mean_dice, 1.0);
    }

    #[test]
    fn nacc_layout() {
        let names = region_preset("nacc").unwrap();
        let rep = multiclass_report(&[0, 13], &[0, 13], &names).unwrap();
        assert_eq!(rep.regions.len(), 13);
        assert_eq!(rep.regions[12].name, "WM-hypointensities");
    }

    #[test]
    fn per_volume_pools_counts() {
        let names = vec!["fg".to_string()];
        let vol = vec![(vec![1, 0], vec![1, 0]), (vec![0, 0], vec![1, 1])];
        let pooled = score_volumes(&[vol.clone()], &names, Scoring::PerVolume).unwrap();
        assert!((pooled.mean_dice - 2.0 / 4.0).abs() < 1e-12);
        let sliced = score_volumes(&[vol], &names, Scoring::PerSlice).unwrap();
        assert!((sliced.mean_dice - 0.5).abs() < 1e-12);
    }
}
