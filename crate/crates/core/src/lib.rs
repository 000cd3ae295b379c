//! Recursive refinement of retinal artery/vein segmentation maps.
//!
//! A base encoder-decoder predicts artery, vein and vessel probability maps
//! from a fundus photograph; a second encoder-decoder, fed only with the
//! artery/vein maps, is applied repeatedly to correct classification errors
//! that are obvious from vessel context. The crate contains:
//!
//! - [`autodiff`]: CPU array engine with reverse-mode gradients and Adam.
//! - [`networks`]: the U-Net subnetwork, the recursive composition and its
//!   ablation variants.
//! - [`training`]: the stage-weighted loss, augmentation, the training loop
//!   with early stopping, and cross-validation splits.
//! - [`data`]: dataset layouts, the RGB ground-truth codec, preprocessing
//!   and resizing rules.
//! - [`metrics`]: ROC/PR curves, artery/vein and vessel classification
//!   metrics, path-based connectivity metrics and the Wilcoxon test.
//! - [`checkpoint`]: the binary model container.
//! - [`synth`]: a seeded synthetic benchmark with locally misleading colour cues.
//! - [`cli`]: the `rrwnet` command-line workflows.

pub mod autodiff;
pub mod checkpoint;
pub mod cli;
pub mod data;
mod error;
pub mod metrics;
pub mod networks;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
