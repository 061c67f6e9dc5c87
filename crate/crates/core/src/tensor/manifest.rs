//! Sample manifest: one JSON array entry per embedded image.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

/// Ground-truth health of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HealthLabel {
    Healthy,
    Defective,
}

impl HealthLabel {
    pub fn is_defective(self) -> bool {
        self == HealthLabel::Defective
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub split: Split,
    pub label: HealthLabel,
    #[serde(default)]
    pub defect_type: Option<String>,
    /// Ground-truth mask, relative to the manifest's directory.
    #[serde(default)]
    pub mask: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub records: Vec<SampleRecord>,
    /// Directory that relative mask paths resolve against.
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn new(records: Vec<SampleRecord>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let manifest = Manifest {
            records,
            base_dir: base_dir.into(),
        };
        manifest.validate(Path::new("<memory>"))?;
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let records: Vec<SampleRecord> =
            serde_json::from_str(&text).map_err(|e| Error::Manifest {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?;
        let manifest = Manifest {
            records,
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        };
        manifest.validate(path)?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.records)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    fn validate(&self, path: &Path) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.records.len());
        for r in &self.records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Manifest {
                    path: path.to_path_buf(),
                    reason: format!("duplicate sample id `{}`", r.id),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.id.clone()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&SampleRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.records.iter().position(|r| r.id == id)
    }

    pub fn mask_path(&self, record: &SampleRecord) -> Option<PathBuf> {
        record.mask.as_ref().map(|m| self.base_dir.join(m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_format() {
        let json = r#"[
            {"id": "a", "split": "train", "label": "healthy", "defect_type": null, "mask": null},
            {"id": "b", "split": "val", "label": "defective", "defect_type": "cut", "mask": "masks/b.png"}
        ]"#;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        std::fs::write(&path, json).unwrap();
        let m = Manifest::load(&path).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.records[1].label, HealthLabel::Defective);
        assert_eq!(m.records[1].defect_type.as_deref(), Some("cut"));
        assert_eq!(
            m.mask_path(&m.records[1]).unwrap(),
            dir.path().join("masks/b.png")
        );
    }

    #[test]
    fn duplicate_ids_rejected() {
        let r = SampleRecord {
            id: "x".into(),
            split: Split::Train,
            label: HealthLabel::Healthy,
            defect_type: None,
            mask: None,
        };
        assert!(Manifest::new(vec![r.clone(), r], ".").is_err());
    }
}
