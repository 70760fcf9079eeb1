//! Leave-two-out benchmark harness for regression models that map word
//! embeddings to fMRI voxel activations and back.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`dataset`]: stimulus vocabularies, per-subject trial matrices,
//!   presentation averaging, stability-based voxel selection and z-scoring.
//! * [`embeddings`]: text-format embedding tables and mixed embedding spaces.
//! * [`regressor`]: the drop-connect tanh network and a closed-form ridge model.
//! * [`evaluation`]: the leave-two-out pairwise matching protocol.
//! * [`analysis`]: mismatch matrices, error overlap and voxel predictability.
//! * [`synth`]: planted-map synthetic data and an independent reference
//!   implementation of the protocol used for cross-checking.

pub mod analysis;
pub mod dataset;
pub mod embeddings;
mod error;
pub mod evaluation;
mod linalg;
pub mod regressor;
pub mod synth;

pub use error::{Error, Result};
