//! File formats and the `lora-hull` command line on top of
//! [`lora_hull_core`]: safetensors checkpoints, JSON anchor manifests,
//! CSV/JSON tables and externally supplied score files.

pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod manifest;
pub mod scores;
pub mod table;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use error::{Error, Result};
pub use manifest::{load_anchor_manifest, Manifest, ManifestEntry};
