//! Command-line front end: experiment runs, run comparisons and synthetic
//! data generation.

pub mod compare;
pub mod config;
pub mod experiment;
mod svg;
pub mod synth;

pub use compare::{compare, CompareMode, CompareReport};
pub use config::ExperimentConfig;
pub use experiment::{run_experiment, RunReport, SummaryRow};
pub use synth::synthesize;
