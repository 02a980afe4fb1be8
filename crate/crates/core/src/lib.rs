//! Face presentation attack detection with a dual-channel network.
//!
//! A compact CNN over the face pixels (the deep channel) and a small MLP over
//! hand-crafted color-texture histograms (the wide channel) produce two
//! 512-dimensional embeddings. They are concatenated and passed through a
//! fully connected interaction block ending in a sigmoid spoof probability.
//!
//! Module map:
//! - [`tensor`], [`gradcheck`]: numeric substrate and finite-difference checks
//! - [`nn`]: layers, loss, SGD and parameter accounting
//! - [`texture`]: color planes and the LBP / CoALBP / LPQ descriptors
//! - [`model`]: the network, its ablation variants and checkpoints
//! - [`data`]: manifests, preprocessing, synthetic data and feature caches
//! - [`train`]: the minibatch training loop
//! - [`eval`]: ROC, EER, HTER and the cross-dataset protocol

pub mod data;
pub mod error;
pub mod eval;
pub mod fsutil;
pub mod gradcheck;
mod linalg;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod texture;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Fill, Tensor};
