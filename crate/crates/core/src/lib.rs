//! Transformer machine-translation training and hyperparameter ablation.
//!
//! Layers, bottom-up:
//!
//! - [`tensor`], [`autodiff`], [`gradcheck`], [`rng`]: numeric substrate
//! - [`data`]: corpus loading, normalization, vocabularies, batching
//! - [`model`]: encoder-decoder Transformer, parameter counting, decoding
//! - [`train`]: optimizer, epochs, metrics, divergence rule, checkpoints
//! - [`harness`]: grid expansion, budgeted sequential sweeps, resumable registry
//! - [`report`]: summary tables, curve files, best-run selection

pub mod autodiff;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod io;
pub mod model;
pub mod report;
pub mod rng;
pub mod tensor;
pub mod train;

pub use autodiff::{Graph, Var};
pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::{IdTensor, Scalar, Tensor};
