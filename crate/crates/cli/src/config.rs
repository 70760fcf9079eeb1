//! Experiment configuration: one JSON document, paths relative to it.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use neurodecode::embeddings::{Combination, VecFormat};
use neurodecode::evaluation::{Direction, VoxelSelectionMode};
use neurodecode::regressor::RegressorConfig;
use serde::{Deserialize, Serialize};

/// Environment variable overriding [`ExperimentConfig::workers`].
pub const WORKERS_ENV: &str = "NEURODECODE_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSpec {
    pub name: String,
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: VecFormat,
}

fn default_format() -> VecFormat {
    VecFormat::HeaderedVec
}

/// A mixed model built from two loaded embedding tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CombinationSpec {
    pub a: String,
    pub b: String,
    #[serde(default = "default_method")]
    pub method: Combination,
    /// Defaults to `a+b` (or `a+b@alpha` for weighted concatenation).
    #[serde(default)]
    pub name: Option<String>,
}

fn default_method() -> Combination {
    Combination::Concat
}

impl CombinationSpec {
    pub fn model_name(&self) -> String {
        match (&self.name, self.method) {
            (Some(n), _) => n.clone(),
            (None, Combination::Concat) => format!("{}+{}", self.a, self.b),
            (None, Combination::WeightedConcat(alpha)) => format!("{}+{}@{alpha}", self.a, self.b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub vocabulary: PathBuf,
    pub subjects: Vec<PathBuf>,
    pub embeddings: Vec<EmbeddingSpec>,
    /// Vocabulary subset to evaluate; all words when absent.
    #[serde(default)]
    pub subset: Option<String>,
    #[serde(default = "default_directions")]
    pub directions: Vec<Direction>,
    #[serde(default)]
    pub regressor: RegressorConfig,
    #[serde(default)]
    pub voxel_selection: VoxelSelectionMode,
    #[serde(default)]
    pub combinations: Vec<CombinationSpec>,
    /// Overrides `regressor.seed` when present.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub output: PathBuf,
    /// Retain held-out predictions and write per-voxel predictability.
    #[serde(default)]
    pub voxel_analysis: bool,
}

fn default_directions() -> Vec<Direction> {
    vec![Direction::WordToBrain]
}

fn default_workers() -> usize {
    1
}

impl ExperimentConfig {
    /// Reads `path`, resolves relative paths against its directory, applies
    /// the worker override from the environment and validates.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        if let Ok(v) = std::env::var(WORKERS_ENV) {
            cfg.workers = v
                .trim()
                .parse()
                .with_context(|| format!("{WORKERS_ENV}={v:?} is not a worker count"))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.vocabulary);
        self.subjects.iter_mut().for_each(fix);
        self.embeddings.iter_mut().for_each(|e| fix(&mut e.path));
        fix(&mut self.output);
    }

    /// Model names in evaluation order: loaded tables, then combinations.
    pub fn model_names(&self) -> Vec<String> {
        self.embeddings
            .iter()
            .map(|e| e.name.clone())
            .chain(self.combinations.iter().map(CombinationSpec::model_name))
            .collect()
    }

    pub fn effective_regressor(&self) -> RegressorConfig {
        let mut r = self.regressor.clone();
        if let Some(seed) = self.seed {
            r.seed = seed;
        }
        r
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            bail!("worker count must be at least 1");
        }
        if self.subjects.is_empty() {
            bail!("no subjects configured");
        }
        if self.embeddings.is_empty() {
            bail!("no embeddings configured");
        }
        if self.directions.is_empty() {
            bail!("no directions configured");
        }
        let directions: BTreeSet<&str> = self.directions.iter().map(|d| d.as_str()).collect();
        if directions.len() != self.directions.len() {
            bail!("duplicate direction");
        }
        let mut seen = BTreeSet::new();
        for name in self.model_names() {
            check_name(&name)?;
            if !seen.insert(name.clone()) {
                bail!("duplicate model name '{name}'");
            }
        }
        let loaded: BTreeSet<&str> = self.embeddings.iter().map(|e| e.name.as_str()).collect();
        for c in &self.combinations {
            for part in [&c.a, &c.b] {
                if !loaded.contains(part.as_str()) {
                    bail!("combination refers to unknown embedding '{part}'");
                }
            }
            if c.a == c.b {
                bail!("combination of '{}' with itself", c.a);
            }
        }
        self.effective_regressor().validate()?;
        if let VoxelSelectionMode::TopK(0) = self.voxel_selection {
            bail!("voxel selection k must be at least 1");
        }
        Ok(())
    }
}

/// Names end up in file names and CSV cells.
fn check_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "._+@-".contains(c));
    if !ok {
        bail!("model name '{name}' must be non-empty and use only letters, digits and . _ + @ -");
    }
    Ok(())
}
