//! Compressed data representation model (CDRM).
//!
//! A sigmoid-headed network scores whether a transition `(s, a, s')` belongs
//! to a dataset. It is trained contrastively against negatives produced by
//! Langevin ascent on its own score, and queried by running Langevin chains
//! over `s'` with `(s, a)` held fixed. The chains that end up above a
//! threshold form the valid set, from which the crate derives a next-state
//! prediction, an aleatoric spread, and an epistemic score.
//!
//! Modules:
//!
//! - [`nnet`]: dense tanh network with exact input and parameter gradients
//! - [`model`], [`train`]: the scored field, contrastive loss, training loop
//! - [`langevin`]: batched Langevin sampler
//! - [`kde`]: RBF density and its standardized out-of-distribution term
//! - [`inference`]: valid-set collection, prediction, AU and EU
//! - [`binref`]: bin-discretization baseline and existence oracle
//! - [`data`]: toy and room-exploration generators, CSV datasets
//! - [`metrics`]: AUROC / AUPRC and the room evaluation protocol
//! - [`io`]: versioned JSON model files
//! - [`cli`]: command implementations behind the `cdrm` binary

pub mod binref;
pub mod cli;
pub mod data;
pub mod error;
pub mod inference;
pub mod io;
pub mod kde;
pub mod langevin;
pub mod metrics;
pub mod model;
pub mod nnet;
pub mod train;

pub use data::{Dims, Transition, TransitionDataset};
pub use error::{CdrmError, Result};
pub use inference::{infer, InferenceConfig, InferenceResult};
pub use kde::{BandwidthRule, KdeStats};
pub use model::CdrmModel;
pub use train::{train, TrainConfig};
