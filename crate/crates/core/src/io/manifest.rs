//! JSON dataset manifest listing volume files.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::volume_file::{decode_header, decode_volume};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::volume::InstanceVolume;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative paths resolve against the manifest's directory.
    pub file: PathBuf,
    pub n_pixels: usize,
    pub has_labels: bool,
    #[serde(default)]
    pub metadata: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub instances: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(instances: Vec<ManifestEntry>) -> Self {
        Self { format_version: MANIFEST_VERSION, instances }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != MANIFEST_VERSION {
            return Err(Error::Format(format!("unsupported manifest version {}", self.format_version)));
        }
        let mut seen = HashSet::new();
        for e in &self.instances {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Format(format!("duplicate instance id {:?}", e.id)));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let m: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    /// Reads every listed volume, checking each header against its entry.
    /// `base` is the directory relative file paths resolve against.
    pub fn load_volumes<T: Scalar>(&self, base: &Path) -> Result<Vec<InstanceVolume<T>>> {
        self.instances
            .par_iter()
            .map(|e| {
                let path = if e.file.is_absolute() { e.file.clone() } else { base.join(&e.file) };
                let bytes = fs::read(&path)
                    .map_err(|err| Error::Format(format!("{}: {}: {err}", e.id, path.display())))?;
                let (labeled, n) = decode_header(&bytes).map_err(|err| tag(&e.id, err))?;
                if n != e.n_pixels || labeled != e.has_labels {
                    return Err(Error::CorruptVolume(format!(
                        "{}: header says {n} pixels (labels: {labeled}), manifest says {} (labels: {})",
                        e.id, e.n_pixels, e.has_labels
                    )));
                }
                decode_volume(&bytes, e.id.clone()).map_err(|err| tag(&e.id, err))
            })
            .collect()
    }
}

fn tag(id: &str, e: Error) -> Error {
    match e {
        Error::Format(m) => Error::Format(format!("{id}: {m}")),
        Error::CorruptVolume(m) => Error::CorruptVolume(format!("{id}: {m}")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::volume_file::write_volume;

    #[test]
    fn round_trip_and_header_check() {
        let dir = tempfile::tempdir().unwrap();
        let v = InstanceVolume::new("a", vec![0.25; 5], vec![0.5; 5], None).unwrap();
        write_volume(&dir.path().join("a.cvol"), &v).unwrap();
        let mut m = DatasetManifest::new(vec![ManifestEntry {
            id: "a".into(),
            file: "a.cvol".into(),
            n_pixels: 5,
            has_labels: false,
            metadata: BTreeMap::from([("true_ratio".to_string(), 0.5)]),
        }]);
        let path = dir.path().join("manifest.json");
        m.save(&path).unwrap();
        let back = DatasetManifest::load(&path).unwrap();
        assert_eq!(back, m);
        let vols: Vec<InstanceVolume<f64>> = back.load_volumes(dir.path()).unwrap();
        assert_eq!(vols[0], v);

        m.instances[0].n_pixels = 6;
        assert!(matches!(m.load_volumes::<f64>(dir.path()), Err(Error::CorruptVolume(_))));
        m.instances[0].n_pixels = 5;
        m.instances.push(m.instances[0].clone());
        assert!(matches!(m.save(&path), Err(Error::Format(_))));
    }
}
