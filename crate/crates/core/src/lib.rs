//! Road pothole classification from frozen, fused backbone features.
//!
//! The pipeline runs in stages that each persist their output:
//!
//! 1. [`dataset`] ingests labeled image folders into a JSON-Lines manifest
//!    and assigns a seeded, stratified train/test split.
//! 2. [`preprocess`] decodes, min-max normalizes and resizes images to
//!    224x224, with optional random rotation and horizontal flip.
//! 3. [`features`] runs three frozen backbones (ResNet50, EfficientNet,
//!    RegNet) and concatenates their pooled outputs into a 5344-d vector,
//!    stored in the `PFV1` format.
//! 4. [`head`] trains a dropout + linear classifier on the fused features
//!    with cross-entropy plus an L1 probability term, Adam and L2 decay.
//! 5. [`metrics`], [`baselines`] and [`viz`] evaluate, compare and visualize.
//!
//! [`synth`] generates a procedural road dataset so every stage can run
//! without external data or pretrained weights.

pub mod baselines;
pub mod dataset;
pub mod error;
pub mod features;
pub mod head;
pub mod metrics;
pub mod preprocess;
pub mod rng;
pub mod synth;
pub mod viz;

pub use error::{Error, Result};
