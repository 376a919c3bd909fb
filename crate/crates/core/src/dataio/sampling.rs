use std::collections::BTreeMap;

use super::DatasetIndex;
use crate::nnkit::Rng;
use crate::{Error, Result};

/// Draws `n_per_class` entries without replacement from every
/// (class, dataset tag) stratum. Strata are visited in sorted order and each
/// stratum's picks keep their manifest order.
pub fn few_shot_sample(index: &DatasetIndex, n_per_class: usize, rng: &mut Rng) -> Result<DatasetIndex> {
    let mut strata: BTreeMap<(usize, &str), Vec<usize>> = BTreeMap::new();
    for (i, e) in index.entries.iter().enumerate() {
        let label = e.label.ok_or_else(|| {
            Error::Data(format!("{}: few-shot sampling needs labelled entries", e.path))
        })?;
        strata.entry((label, e.dataset_tag.as_str())).or_default().push(i);
    }
    let mut entries = Vec::with_capacity(strata.len() * n_per_class);
    for ((label, tag), members) in &strata {
        if members.len() < n_per_class {
            return Err(Error::Starved {
                class: index.class_names[*label].clone(),
                tag: tag.to_string(),
                need: n_per_class,
                have: members.len(),
            });
        }
        let mut picks = rng.choose_indices(members.len(), n_per_class);
        picks.sort_unstable();
        for pick in picks {
            entries.push(index.entries[members[pick]].clone());
        }
    }
    DatasetIndex::new(entries, index.class_names.clone())
}

/// Keeps the entries of the first `n` distinct volumes (by path, in manifest
/// order).
pub fn first_volumes(index: &DatasetIndex, n: usize) -> DatasetIndex {
    let mut kept: Vec<&str> = Vec::new();
    let mut entries = Vec::new();
    for e in &index.entries {
        if !kept.contains(&e.path.as_str()) {
            if kept.len() == n {
                continue;
            }
            kept.push(&e.path);
        }
        entries.push(e.clone());
    }
    DatasetIndex {
        entries,
        class_names: index.class_names.clone(),
    }
}
