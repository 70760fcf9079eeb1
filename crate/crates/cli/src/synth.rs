//! `synth`: write a synthetic subject plus a ready-to-run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use neurodecode::embeddings::VecFormat;
use neurodecode::evaluation::{Direction, VoxelSelectionMode};
use neurodecode::regressor::RegressorConfig;
use neurodecode::synth::{generate_synthetic, MapKind, SynthSpec};

use crate::config::{CombinationSpec, EmbeddingSpec, ExperimentConfig};

/// Generates data for the spec at `spec_path` into `out` and returns the
/// path of the written `config.json`.
pub fn synthesize(spec_path: &Path, out: &Path) -> Result<PathBuf> {
    let text = fs::read_to_string(spec_path)
        .with_context(|| format!("cannot read {}", spec_path.display()))?;
    let spec: SynthSpec = serde_json::from_str(&text)
        .with_context(|| format!("invalid synth spec {}", spec_path.display()))?;
    let data = generate_synthetic(&spec)?;
    data.write(out)?;

    let embedding = |name: &str, file: &str| EmbeddingSpec {
        name: name.into(),
        path: file.into(),
        format: VecFormat::HeaderedVec,
    };
    let mut embeddings = vec![embedding("synthetic", "embeddings.vec")];
    let mut combinations = Vec::new();
    if spec.map_kind == MapKind::DualBlock {
        embeddings.push(embedding("block-a", "block-a.vec"));
        embeddings.push(embedding("block-b", "block-b.vec"));
        combinations.push(CombinationSpec {
            a: "block-a".into(),
            b: "block-b".into(),
            method: neurodecode::embeddings::Combination::Concat,
            name: None,
        });
    }
    let config = ExperimentConfig {
        vocabulary: "words.csv".into(),
        subjects: vec!["subject.tsv".into()],
        embeddings,
        subset: None,
        directions: vec![Direction::WordToBrain],
        regressor: RegressorConfig::default(),
        voxel_selection: VoxelSelectionMode::default(),
        combinations,
        seed: Some(spec.seed),
        workers: 1,
        output: "results".into(),
        voxel_analysis: false,
    };
    let path = out.join("config.json");
    let json = serde_json::to_string_pretty(&config)?;
    fs::write(&path, json + "\n").with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}
