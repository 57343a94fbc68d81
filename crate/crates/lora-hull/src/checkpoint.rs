//! safetensors checkpoints holding adapter factors.
//!
//! Layout: an 8-byte little-endian header length `N`, `N` bytes of JSON
//! mapping tensor names to `{dtype, shape, data_offsets}` (plus an optional
//! string map under `__metadata__`), then the raw little-endian buffer.
//! Parsing and layout validation go through the `safetensors` crate. Files
//! are written here so that output bytes depend only on the tensor map: keys
//! are emitted in lexicographic order, which the reference writer does not
//! guarantee for metadata.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use half::{bf16, f16};
use lora_hull_core::{Adapter, AdapterError, AdapterLayer, LinalgError, Matrix};
use safetensors::{Dtype, SafeTensors};
use serde::Serialize;

use crate::error::{Error, Result};

pub const LORA_A: &str = "lora_A";
pub const LORA_B: &str = "lora_B";

/// Tensors and string metadata of one file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: BTreeMap<String, Matrix>,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("malformed safetensors layout: {0}")]
    Layout(#[from] safetensors::SafeTensorError),
    #[error("tensor {name}: unsupported dtype {dtype:?} (F32, F16 and BF16 are accepted)")]
    UnsupportedDtype { name: String, dtype: Dtype },
    #[error("tensor {name}: expected a 2-d tensor, got shape {shape:?}")]
    UnsupportedRank { name: String, shape: Vec<usize> },
    #[error("tensor {name}: {source}")]
    Tensor { name: String, source: LinalgError },
    #[error("metadata {key}: cannot parse {value:?} as a positive number")]
    Metadata { key: String, value: String },
    #[error("tensor {name} has no matching {missing} tensor")]
    Unpaired { name: String, missing: &'static str },
    #[error("tensor {name} is not a {LORA_A} or {LORA_B} weight")]
    Unrecognized { name: String },
    #[error(transparent)]
    Adapter(#[from] AdapterError),
}

fn to_f32(name: &str, dtype: Dtype, bytes: &[u8]) -> Result<Vec<f32>, FormatError> {
    Ok(match dtype {
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        Dtype::F16 => bytes
            .chunks_exact(2)
            .map(|c| f16::from_le_bytes([c[0], c[1]]).to_f32())
            .collect(),
        Dtype::BF16 => bytes
            .chunks_exact(2)
            .map(|c| bf16::from_le_bytes([c[0], c[1]]).to_f32())
            .collect(),
        other => {
            return Err(FormatError::UnsupportedDtype {
                name: name.into(),
                dtype: other,
            })
        }
    })
}

/// Parses a whole file image.
pub fn decode(bytes: &[u8]) -> Result<Checkpoint, FormatError> {
    let (_, header) = SafeTensors::read_metadata(bytes)?;
    let st = SafeTensors::deserialize(bytes)?;
    let mut tensors = BTreeMap::new();
    for (name, view) in st.iter() {
        let shape = view.shape();
        let &[rows, cols] = shape else {
            return Err(FormatError::UnsupportedRank {
                name: name.into(),
                shape: shape.to_vec(),
            });
        };
        let data = to_f32(name, view.dtype(), view.data())?;
        let m = Matrix::from_finite(rows, cols, data).map_err(|source| FormatError::Tensor {
            name: name.into(),
            source,
        })?;
        tensors.insert(name.to_string(), m);
    }
    let metadata = header
        .metadata()
        .as_ref()
        .map(|m| m.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
        .unwrap_or_default();
    Ok(Checkpoint { tensors, metadata })
}

#[derive(Serialize)]
struct Entry {
    dtype: &'static str,
    shape: [usize; 2],
    data_offsets: [usize; 2],
}

/// Serializes with lexicographic key order, F32 payloads and the header
/// padded with spaces to a multiple of 8 bytes.
pub fn encode(ck: &Checkpoint) -> Result<Vec<u8>, FormatError> {
    let mut header = serde_json::Map::new();
    if !ck.metadata.is_empty() {
        header.insert(
            "__metadata__".into(),
            serde_json::to_value(&ck.metadata).expect("string map"),
        );
    }
    let mut offset = 0;
    for (name, m) in &ck.tensors {
        if let Some(index) = m.data().iter().position(|x| !x.is_finite()) {
            return Err(FormatError::Tensor {
                name: name.clone(),
                source: LinalgError::NonFinite { index },
            });
        }
        let len = m.data().len() * 4;
        let entry = Entry {
            dtype: "F32",
            shape: [m.rows(), m.cols()],
            data_offsets: [offset, offset + len],
        };
        header.insert(name.clone(), serde_json::to_value(entry).expect("plain struct"));
        offset += len;
    }
    let mut head = serde_json::to_vec(&header).expect("json value");
    head.resize(head.len().next_multiple_of(8), b' ');
    let mut out = Vec::with_capacity(8 + head.len() + offset);
    out.extend_from_slice(&(head.len() as u64).to_le_bytes());
    out.extend_from_slice(&head);
    for m in ck.tensors.values() {
        for x in m.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| Error::parse(path, e))
}

pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let bytes = encode(ck).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Splits `x.lora_A.weight` into (`x`, `lora_A`, `.weight`).
fn split_name(name: &str) -> Option<(&str, &'static str, &str)> {
    for role in [LORA_A, LORA_B] {
        if let Some(pos) = name.find(role) {
            let prefix = name[..pos].trim_end_matches('.');
            return Some((prefix, role, &name[pos + role.len()..]));
        }
    }
    None
}

fn parse_positive(metadata: &BTreeMap<String, String>, key: &str) -> Result<Option<f32>, FormatError> {
    let Some(value) = metadata.get(key) else {
        return Ok(None);
    };
    match value.trim().parse::<f32>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(Some(v)),
        _ => Err(FormatError::Metadata {
            key: key.into(),
            value: value.clone(),
        }),
    }
}

fn scaling_key(layer: &str) -> String {
    format!("scaling.{layer}")
}

/// Scaling for `layer`: `override_` if given, else `scaling.<layer>`, else
/// `scaling`, else `lora_alpha / r`, else 1.
pub fn layer_scaling(
    metadata: &BTreeMap<String, String>,
    layer: &str,
    override_: Option<f32>,
) -> Result<f32, FormatError> {
    if let Some(s) = override_ {
        return Ok(s);
    }
    if let Some(s) = parse_positive(metadata, &scaling_key(layer))? {
        return Ok(s);
    }
    if let Some(s) = parse_positive(metadata, "scaling")? {
        return Ok(s);
    }
    match (parse_positive(metadata, "lora_alpha")?, parse_positive(metadata, "r")?) {
        (Some(alpha), Some(r)) => Ok(alpha / r),
        _ => Ok(1.0),
    }
}

fn is_scaling_key(key: &str) -> bool {
    key == "scaling" || key.starts_with("scaling.")
}

/// Groups `lora_A`/`lora_B` tensor pairs into adapter layers.
pub fn checkpoint_to_adapter(id: &str, ck: &Checkpoint, scaling_override: Option<f32>) -> Result<Adapter, FormatError> {
    let mut groups: BTreeMap<(String, String), (Option<&Matrix>, Option<&Matrix>, &str)> = BTreeMap::new();
    for (name, m) in &ck.tensors {
        let (prefix, role, suffix) = split_name(name).ok_or_else(|| FormatError::Unrecognized { name: name.clone() })?;
        let slot = groups
            .entry((prefix.to_string(), suffix.to_string()))
            .or_insert((None, None, name.as_str()));
        if role == LORA_A {
            slot.0 = Some(m);
        } else {
            slot.1 = Some(m);
        }
    }
    let mut layers = Vec::with_capacity(groups.len());
    for ((prefix, _), (a, b, first)) in groups {
        let (a, b) = match (a, b) {
            (Some(a), Some(b)) => (a, b),
            (Some(_), None) => {
                return Err(FormatError::Unpaired {
                    name: first.into(),
                    missing: LORA_B,
                })
            }
            _ => {
                return Err(FormatError::Unpaired {
                    name: first.into(),
                    missing: LORA_A,
                })
            }
        };
        let scaling = layer_scaling(&ck.metadata, &prefix, scaling_override)?;
        layers.push(AdapterLayer::new(prefix, b.clone(), a.clone(), scaling)?);
    }
    let mut adapter = Adapter::new(id, layers)?;
    adapter.meta = ck
        .metadata
        .iter()
        .filter(|(k, _)| !is_scaling_key(k) && k.as_str() != "lora_alpha" && k.as_str() != "r")
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    Ok(adapter)
}

/// Factor tensors `<layer>.lora_A.weight` / `<layer>.lora_B.weight`. The
/// scaling goes to `scaling` when shared by all layers, else per layer.
pub fn adapter_to_checkpoint(adapter: &Adapter) -> Checkpoint {
    let mut ck = Checkpoint {
        tensors: BTreeMap::new(),
        metadata: adapter.meta.clone(),
    };
    let scalings: Vec<f32> = adapter.layers().map(AdapterLayer::scaling).collect();
    let shared = scalings.windows(2).all(|w| w[0] == w[1]);
    for l in adapter.layers() {
        ck.tensors.insert(format!("{}.{LORA_A}.weight", l.name()), l.a().clone());
        ck.tensors.insert(format!("{}.{LORA_B}.weight", l.name()), l.b().clone());
        if !shared {
            ck.metadata.insert(scaling_key(l.name()), l.scaling().to_string());
        }
    }
    if shared {
        if let Some(s) = scalings.first() {
            ck.metadata.insert("scaling".into(), s.to_string());
        }
    }
    ck
}

/// Dense per-layer deltas as `<layer>.weight`.
pub fn dense_checkpoint(deltas: &BTreeMap<String, Matrix>, metadata: BTreeMap<String, String>) -> Checkpoint {
    Checkpoint {
        tensors: deltas.iter().map(|(k, v)| (format!("{k}.weight"), v.clone())).collect(),
        metadata,
    }
}
