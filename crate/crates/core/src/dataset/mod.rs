//! Stimulus vocabularies and per-subject fMRI data.
//!
//! Subject data arrive as one row per trial (a single presentation of a
//! single stimulus word). The pipeline averages presentations into one
//! response row per word, selects reliable voxels with a cross-presentation
//! stability score, and z-scores everything with training-fold statistics.

mod stability;
mod standardize;
mod subject;
mod vocab;

pub use stability::{compute_stability_scores, select_top_voxels, StabilityStats, VoxelSelection};
pub use standardize::{Standardizer, STD_FLOOR};
pub use subject::{average_presentations, SubjectDataset, WordResponseMatrix};
pub use vocab::StimulusVocabulary;
