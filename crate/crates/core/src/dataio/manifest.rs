use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A slice label as written in a manifest: a class name or a class id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelRef {
    Id(usize),
    Name(String),
}

/// One JSONL line of a dataset manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub axis: usize,
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<LabelRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brain_mask_path: Option<String>,
    #[serde(default = "default_tag")]
    pub dataset_tag: String,
}

fn default_tag() -> String {
    "default".into()
}

/// A manifest entry with its label resolved to a class id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexEntry {
    pub path: String,
    pub axis: usize,
    pub index: usize,
    pub label: Option<usize>,
    pub mask_path: Option<String>,
    pub brain_mask_path: Option<String>,
    pub dataset_tag: String,
}

impl IndexEntry {
    pub fn key(&self) -> (&str, usize, usize) {
        (&self.path, self.axis, self.index)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetIndex {
    pub entries: Vec<IndexEntry>,
    pub class_names: Vec<String>,
}

impl DatasetIndex {
    pub fn new(entries: Vec<IndexEntry>, class_names: Vec<String>) -> Result<Self> {
        let idx = DatasetIndex { entries, class_names };
        idx.validate()?;
        Ok(idx)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if e.axis > 2 {
                return Err(Error::Data(format!("{}: axis {} is not in {{0,1,2}}", e.path, e.axis)));
            }
            if let Some(l) = e.label {
                if l >= self.class_names.len() {
                    return Err(Error::Data(format!(
                        "{}: label {l} out of range for {} classes",
                        e.path,
                        self.class_names.len()
                    )));
                }
            }
            if !seen.insert(e.key()) {
                return Err(Error::Data(format!(
                    "duplicate manifest entry ({}, axis {}, index {})",
                    e.path, e.axis, e.index
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Resolves raw manifest lines against an ordered class list.
    pub fn from_manifest(lines: Vec<ManifestEntry>, class_names: Vec<String>) -> Result<Self> {
        let entries = lines
            .into_iter()
            .map(|m| {
                let label = match m.label {
                    None => None,
                    Some(LabelRef::Id(i)) => Some(i),
                    Some(LabelRef::Name(n)) => Some(
                        class_names
                            .iter()
                            .position(|c| *c == n)
                            .ok_or_else(|| Error::Data(format!("{}: unknown class `{n}`", m.path)))?,
                    ),
                };
                Ok(IndexEntry {
                    path: m.path,
                    axis: m.axis,
                    index: m.index,
                    label,
                    mask_path: m.mask_path,
                    brain_mask_path: m.brain_mask_path,
                    dataset_tag: m.dataset_tag,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        DatasetIndex::new(entries, class_names)
    }

    pub fn to_manifest(&self) -> Vec<ManifestEntry> {
        self.entries
            .iter()
            .map(|e| ManifestEntry {
                path: e.path.clone(),
                axis: e.axis,
                index: e.index,
                label: e.label.map(|l| LabelRef::Name(self.class_names[l].clone())),
                mask_path: e.mask_path.clone(),
                brain_mask_path: e.brain_mask_path.clone(),
                dataset_tag: e.dataset_tag.clone(),
            })
            .collect()
    }
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(entry);
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for e in entries {
        serde_json::to_writer(&mut f, e)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_forms() {
        let a: ManifestEntry =
            serde_json::from_str(r#"{"path":"a.nii","axis":2,"index":3,"label":"T2"}"#).unwrap();
        let b: ManifestEntry =
            serde_json::from_str(r#"{"path":"b.nii","axis":2,"index":3,"label":0,"dataset_tag":"x"}"#).unwrap();
        let idx = DatasetIndex::from_manifest(vec![a, b], vec!["T1".into(), "T2".into()]).unwrap();
        assert_eq!(idx.entries[0].label, Some(1));
        assert_eq!(idx.entries[0].dataset_tag, "default");
        assert_eq!(idx.entries[1].label, Some(0));
    }

    #[test]
    fn duplicates_and_bad_labels_rejected() {
        let e: ManifestEntry = serde_json::from_str(r#"{"path":"a.nii","axis":0,"index":1,"label":5}"#).unwrap();
        assert!(DatasetIndex::from_manifest(vec![e.clone()], vec!["x".into()]).is_err());
        let e = ManifestEntry { label: None, ..e };
        assert!(DatasetIndex::from_manifest(vec![e.clone(), e], vec![]).is_err());
    }
}
