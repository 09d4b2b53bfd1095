//! Desk-scale multimodal author-intent classification, built from scratch.
//!
//! The crate pairs a tape-based reverse-mode autodiff engine with small
//! transformer encoders for text and images, and studies three ways of
//! fusing the two modalities (early, late, intermediate) on a synthetic
//! planted-signal benchmark where the Bayes-optimal accuracy of every
//! modality is known exactly.
//!
//! Library layout:
//!
//! - [`tensor`]     — tensors, the operation tape, the backward pass
//! - [`text`]       — normalization, vocabulary, transformer text encoder
//! - [`vision`]     — PPM images, preprocessing, patch transformer encoder
//! - [`fusion`]     — labels, fusion strategies, the classification model
//! - [`train`]      — cross-entropy, AdamW, LR schedule, the training loop
//! - [`metrics`]    — confusion matrices, per-class metrics, report tables
//! - [`data`]       — manifests, stratified splits, the synthetic generator
//! - [`checkpoint`] — self-contained model snapshots (weights + config + vocab)
//! - [`cli`]        — run configuration and the five CLI commands
//!
//! Every runnable capability has a matching program under `examples/`;
//! start with `cargo run --release --example compare_fusions`.

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod fusion;
pub mod metrics;
pub mod tensor;
pub mod text;
pub mod trace;
pub mod train;
pub(crate) mod transformer;
pub mod vision;

pub use error::{Error, Result};
