//! JSON manifests binding attribute names to their two anchor checkpoints.
//!
//! ```json
//! {
//!   "attributes": [
//!     {"name": "formality", "minus": "informal.safetensors", "plus": "formal.safetensors", "scaling": 0.5}
//!   ],
//!   "layers": {"layers.0.q_proj": [4096, 4096]}
//! }
//! ```
//!
//! Relative paths resolve against the manifest's directory. `scaling`
//! overrides whatever the checkpoints carry; `layers` is optional and, when
//! present, must match the loaded schema exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use lora_hull_core::{AnchorPair, AnchorSet, LayerSchema};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{checkpoint_to_adapter, read_checkpoint};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub minus: PathBuf,
    pub plus: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<f32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub attributes: Vec<ManifestEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<BTreeMap<String, (usize, usize)>>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn check_schema(expected: &BTreeMap<String, (usize, usize)>, found: &LayerSchema) -> Result<()> {
    for (layer, shape) in expected {
        match found.get(layer) {
            Some(s) if s == shape => {}
            Some(s) => {
                return Err(Error::Validation(format!(
                    "layer {layer}: manifest expects shape {shape:?}, checkpoints have {s:?}"
                )))
            }
            None => return Err(Error::Validation(format!("layer {layer}: listed in manifest but missing from checkpoints"))),
        }
    }
    if let Some(extra) = found.keys().find(|k| !expected.contains_key(*k)) {
        return Err(Error::Validation(format!("layer {extra}: present in checkpoints but not listed in manifest")));
    }
    Ok(())
}

/// Loads every checkpoint named by the manifest and validates the set.
/// Anchor ids are `<name>.minus` and `<name>.plus`.
pub fn load_anchor_manifest(path: &Path) -> Result<AnchorSet> {
    let manifest = Manifest::read(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut pairs = Vec::with_capacity(manifest.attributes.len());
    for entry in &manifest.attributes {
        if let Some(s) = entry.scaling {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Validation(format!("attribute {}: scaling override {s} must be positive", entry.name)));
            }
        }
        let load = |side: &str, file: &Path| -> Result<_> {
            let full = resolve(base, file);
            let ck = read_checkpoint(&full)?;
            checkpoint_to_adapter(&format!("{}.{side}", entry.name), &ck, entry.scaling)
                .map_err(|e| Error::parse(&full, format!("attribute {}: {e}", entry.name)))
        };
        pairs.push(AnchorPair {
            attribute: entry.name.clone(),
            minus: load("minus", &entry.minus)?,
            plus: load("plus", &entry.plus)?,
        });
    }
    let set = AnchorSet::new(pairs).map_err(|e| match e {
        lora_hull_core::AdapterError::InvalidAnchors { violations } => Error::Validation(
            violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; "),
        ),
        other => other.into(),
    })?;
    if let Some(expected) = &manifest.layers {
        check_schema(expected, set.schema())?;
    }
    Ok(set)
}
