//! Continuous interpolation over low-rank adapter checkpoints.
//!
//! Each controllable attribute is represented by a pair of fine-tuned
//! adapters sitting at its two extremes. An interpolation weight `alpha`
//! moves along the segment between a pair, and simplex mixing weights
//! `lambda` combine the per-attribute interpolants, which spans the convex
//! hull of all anchors. Everything operates on adapter deltas
//! (`scaling · B · A`); base-model weights are never touched.
//!
//! The crate is `no_std` (with `alloc`). File formats and the command line
//! live in the `lora-hull` companion crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod adapter;
pub mod diagnostics;
pub mod interpolation;
pub mod math;
pub mod sweep;
pub mod synthetic;
pub mod tensor;

pub use adapter::{
    validate_anchor_pairs, validate_mixspec, Adapter, AdapterError, AdapterLayer, AnchorPair,
    AnchorSet, LayerSchema, MixSpec, Violation, ViolationKind,
};
pub use interpolation::{compose_multi, compose_single, recompress, CompositeAdapter, Term};
pub use tensor::{LinalgError, Matrix};
