//! The leave-two-out protocol.
//!
//! For every unordered pair of stimulus words a model is trained on the
//! remaining words and asked to predict the two held-out items. The fold is
//! correct when matching each prediction to its own target scores a higher
//! total cosine similarity than the crossed assignment.

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::{Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    average_presentations, select_top_voxels, StabilityStats, Standardizer, StimulusVocabulary,
    SubjectDataset,
};
use crate::embeddings::{lookup_matrix, EmbeddingMatrix, EmbeddingTable};
use crate::regressor::{fit, predict, RegressorConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// Embeddings are inputs, voxel responses are targets.
    WordToBrain,
    /// Voxel responses are inputs, embeddings are targets.
    BrainToWord,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::WordToBrain => "word-to-brain",
            Direction::BrainToWord => "brain-to-word",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word-to-brain" => Ok(Direction::WordToBrain),
            "brain-to-word" => Ok(Direction::BrainToWord),
            _ => Err(Error::argument(format!("unknown direction '{s}'"))),
        }
    }
}

/// Which voxels enter a fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VoxelSelectionMode {
    All,
    /// The `k` most stable voxels over the fold's training words. A `k`
    /// larger than the voxel count keeps every voxel.
    TopK(usize),
}

impl Default for VoxelSelectionMode {
    fn default() -> Self {
        VoxelSelectionMode::TopK(500)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub regressor: RegressorConfig,
    pub selection: VoxelSelectionMode,
    /// Keep held-out predictions for voxel analysis.
    pub retain_predictions: bool,
    pub workers: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            regressor: RegressorConfig::default(),
            selection: VoxelSelectionMode::default(),
            retain_predictions: false,
            workers: 1,
        }
    }
}

/// Result of matching two predictions against two targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchOutcome {
    pub correct: bool,
    /// `(s_ii, s_jj, s_ij, s_ji)` where `s_ij = cos(prediction_i, target_j)`.
    pub similarities: [f64; 4],
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.dot(&b) / (na * nb)
}

/// Correct iff `s_11 + s_22 > s_12 + s_21`; ties count as incorrect.
pub fn match_pair(
    p1: ArrayView1<f64>,
    p2: ArrayView1<f64>,
    t1: ArrayView1<f64>,
    t2: ArrayView1<f64>,
) -> Result<MatchOutcome> {
    let n = p1.len();
    if p2.len() != n || t1.len() != n || t2.len() != n {
        return Err(Error::argument(format!(
            "match vectors have lengths {}, {}, {}, {}",
            n,
            p2.len(),
            t1.len(),
            t2.len()
        )));
    }
    let s = [cosine(p1, t1), cosine(p2, t2), cosine(p1, t2), cosine(p2, t1)];
    Ok(MatchOutcome {
        correct: s[0] + s[1] > s[2] + s[3],
        similarities: s,
    })
}

/// All `i < j` index pairs in lexicographic order.
pub fn enumerate_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect()
}

/// Held-out predictions in the target space's original units.
#[derive(Debug, Clone, PartialEq)]
pub struct HeldOutPredictions {
    /// Target columns the model predicted (selected voxels for
    /// word-to-brain, every embedding dimension for brain-to-word).
    pub columns: Vec<usize>,
    /// Two rows, for the pair's first and second word.
    pub rows: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    /// Positions of the held-out words in [`EvalResult::words`].
    pub pair: (usize, usize),
    pub correct: bool,
    pub similarities: [f64; 4],
    pub predictions: Option<HeldOutPredictions>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub subject_id: String,
    pub model_name: String,
    pub direction: Direction,
    pub words: Vec<String>,
    pub folds: Vec<FoldResult>,
    pub accuracy: f64,
    pub config: EvalConfig,
    pub n_voxels: usize,
    pub voxel_coords: Option<Vec<[i32; 3]>>,
    /// Presentation-averaged responses (words × voxels), kept alongside
    /// retained predictions.
    pub responses: Option<Array2<f64>>,
}

impl EvalResult {
    pub fn correct_count(&self) -> usize {
        self.folds.iter().filter(|f| f.correct).count()
    }

    /// `eval_<subject>_<model>_<direction>.csv`
    pub fn file_name(&self) -> String {
        format!(
            "eval_{}_{}_{}.csv",
            self.subject_id, self.model_name, self.direction
        )
    }

    /// One row per fold, then `summary,<folds>,<correct>,<accuracy>,,,`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("word_i,word_j,correct,s_ii,s_jj,s_ij,s_ji\n");
        for f in &self.folds {
            let [a, b, c, d] = f.similarities;
            let _ = writeln!(
                out,
                "{},{},{},{a},{b},{c},{d}",
                self.words[f.pair.0], self.words[f.pair.1], f.correct
            );
        }
        let _ = writeln!(
            out,
            "summary,{},{},{},,,",
            self.folds.len(),
            self.correct_count(),
            self.accuracy
        );
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// A prepared leave-two-out run: averaged responses, embedding rows and
/// stability statistics shared read-only by every fold.
pub struct LeaveTwoOut<'a> {
    ds: &'a SubjectDataset,
    words: Vec<String>,
    word_ids: Vec<usize>,
    responses: Array2<f64>,
    embeddings: EmbeddingMatrix,
    stability: Option<StabilityStats<'a>>,
    direction: Direction,
    config: EvalConfig,
}

impl<'a> LeaveTwoOut<'a> {
    pub fn new(
        ds: &'a SubjectDataset,
        vocab: &StimulusVocabulary,
        words: &[usize],
        table: &EmbeddingTable,
        direction: Direction,
        config: EvalConfig,
    ) -> Result<Self> {
        config.regressor.validate()?;
        if config.workers == 0 {
            return Err(Error::argument("worker count must be at least 1"));
        }
        if words.len() < 4 {
            return Err(Error::argument(format!(
                "leave-two-out needs at least 4 words, got {}",
                words.len()
            )));
        }
        if let Some(&w) = words.iter().find(|&&w| w >= vocab.len()) {
            return Err(Error::Vocabulary(format!("word id {w} outside the vocabulary")));
        }
        let mut sorted = words.to_vec();
        sorted.sort_unstable();
        if sorted.windows(2).any(|p| p[0] == p[1]) {
            return Err(Error::argument("word subset lists a word twice"));
        }
        let missing: Vec<&str> = words
            .iter()
            .filter(|&&w| !ds.contains_word(w))
            .map(|&w| vocab.word(w))
            .collect();
        if !missing.is_empty() {
            return Err(Error::Vocabulary(format!(
                "subject {} has no trials for: {}",
                ds.subject_id(),
                missing.join(", ")
            )));
        }
        let names: Vec<String> = words.iter().map(|&w| vocab.word(w).to_string()).collect();
        let embeddings = lookup_matrix(table, &names)?;
        let responses = average_presentations(ds, words)?.rows;
        let stability = match config.selection {
            VoxelSelectionMode::All => None,
            VoxelSelectionMode::TopK(0) => {
                return Err(Error::argument("voxel selection size must be positive"))
            }
            VoxelSelectionMode::TopK(_) => Some(StabilityStats::new(ds, words)?),
        };
        Ok(LeaveTwoOut {
            ds,
            words: names,
            word_ids: words.to_vec(),
            responses,
            embeddings,
            stability,
            direction,
            config,
        })
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        enumerate_pairs(self.words.len())
    }

    fn selected_voxels(&self, i: usize, j: usize) -> Result<Vec<usize>> {
        let n_voxels = self.ds.n_voxels();
        match (&self.stability, self.config.selection) {
            (Some(stats), VoxelSelectionMode::TopK(k)) => {
                let scores = stats.scores_excluding(&[self.word_ids[i], self.word_ids[j]])?;
                Ok(select_top_voxels(&scores, k.min(n_voxels))?.indices)
            }
            _ => Ok((0..n_voxels).collect()),
        }
    }

    /// Trains on every word but positions `i` and `j` and scores the pair.
    pub fn run_fold(&self, fold_index: usize, (i, j): (usize, usize)) -> Result<FoldResult> {
        let n = self.words.len();
        if i >= j || j >= n {
            return Err(Error::argument(format!("invalid fold pair ({i}, {j})")));
        }
        let voxels = self.selected_voxels(i, j)?;
        let brain = self.responses.select(Axis(1), &voxels);
        let (inputs, targets) = match self.direction {
            Direction::WordToBrain => (&self.embeddings.rows, &brain),
            Direction::BrainToWord => (&brain, &self.embeddings.rows),
        };

        let train: Vec<usize> = (0..n).filter(|&k| k != i && k != j).collect();
        let held = [i, j];
        let x_train = inputs.select(Axis(0), &train);
        let y_train = targets.select(Axis(0), &train);
        let x_scaler = Standardizer::fit(x_train.view())?;
        let y_scaler = Standardizer::fit(y_train.view())?;

        let mut cfg = self.config.regressor.clone();
        cfg.seed ^= fold_index as u64;
        let model = fit(
            &cfg,
            x_scaler.apply(x_train.view())?.view(),
            y_scaler.apply(y_train.view())?.view(),
        )?;

        let x_held = x_scaler.apply(inputs.select(Axis(0), &held).view())?;
        let y_held = y_scaler.apply(targets.select(Axis(0), &held).view())?;
        let pred = predict(&model, x_held.view())?;
        let outcome = match_pair(pred.row(0), pred.row(1), y_held.row(0), y_held.row(1))?;

        let predictions = if self.config.retain_predictions {
            let columns = match self.direction {
                Direction::WordToBrain => voxels,
                Direction::BrainToWord => (0..targets.ncols()).collect(),
            };
            Some(HeldOutPredictions {
                columns,
                rows: y_scaler.invert(pred.view())?,
            })
        } else {
            None
        };
        Ok(FoldResult {
            pair: (i, j),
            correct: outcome.correct,
            similarities: outcome.similarities,
            predictions,
        })
    }

    /// Runs every fold on a pool of `config.workers` threads. Results are in
    /// pair order regardless of scheduling.
    pub fn run(&self) -> Result<EvalResult> {
        let pairs = self.pairs();
        let total = pairs.len();
        let done = AtomicUsize::new(0);
        let report_every = (total / 10).max(1);
        let model = self.embeddings.source_model.as_str();
        let run_one = |(index, &pair): (usize, &(usize, usize))| {
            let r = self.run_fold(index, pair);
            let finished = done.fetch_add(1, Ordering::Relaxed) + 1;
            if finished.is_multiple_of(report_every) || finished == total {
                log::info!(
                    "{} {} {}: {finished}/{total} folds",
                    self.ds.subject_id(),
                    model,
                    self.direction
                );
            }
            r
        };
        let outcomes: Vec<Result<FoldResult>> = if self.config.workers == 1 {
            pairs.iter().enumerate().map(run_one).collect()
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(self.config.workers)
                .build()
                .map_err(|e| Error::argument(format!("cannot build worker pool: {e}")))?;
            pool.install(|| pairs.par_iter().enumerate().map(run_one).collect())
        };

        let mut folds = Vec::with_capacity(total);
        for (index, outcome) in outcomes.into_iter().enumerate() {
            match outcome {
                Ok(f) => folds.push(f),
                Err(e) => {
                    let (i, j) = pairs[index];
                    return Err(Error::Fold {
                        fold: index,
                        word_i: self.words[i].clone(),
                        word_j: self.words[j].clone(),
                        source: Box::new(e),
                    });
                }
            }
        }
        let correct = folds.iter().filter(|f| f.correct).count();
        Ok(EvalResult {
            subject_id: self.ds.subject_id().to_string(),
            model_name: model.to_string(),
            direction: self.direction,
            words: self.words.clone(),
            folds,
            accuracy: correct as f64 / total as f64,
            config: self.config.clone(),
            n_voxels: self.ds.n_voxels(),
            voxel_coords: self.ds.voxel_coords().map(<[_]>::to_vec),
            responses: self
                .config
                .retain_predictions
                .then(|| self.responses.clone()),
        })
    }
}

/// Prepares and runs the full protocol over `words` (vocabulary ids).
pub fn run_leave_two_out(
    ds: &SubjectDataset,
    vocab: &StimulusVocabulary,
    words: &[usize],
    table: &EmbeddingTable,
    direction: Direction,
    config: EvalConfig,
) -> Result<EvalResult> {
    LeaveTwoOut::new(ds, vocab, words, table, direction, config)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use proptest::prelude::*;

    #[test]
    fn pair_enumeration() {
        assert_eq!(enumerate_pairs(60).len(), 1770);
        assert_eq!(enumerate_pairs(3), vec![(0, 1), (0, 2), (1, 2)]);
        assert!(enumerate_pairs(1).is_empty());
        assert!(enumerate_pairs(0).is_empty());
    }

    #[test]
    fn match_rules() {
        let e1 = array![1.0, 0.0];
        let e2 = array![0.0, 1.0];
        assert!(match_pair(e1.view(), e2.view(), e1.view(), e2.view()).unwrap().correct);
        assert!(!match_pair(e2.view(), e1.view(), e1.view(), e2.view()).unwrap().correct);
        // identical predictions tie
        let tie = match_pair(e1.view(), e1.view(), e1.view(), e2.view()).unwrap();
        assert!(!tie.correct);
        let z = array![0.0, 0.0];
        let zero = match_pair(z.view(), e2.view(), e1.view(), e2.view()).unwrap();
        assert_eq!(zero.similarities[0], 0.0);
        assert!(match_pair(e1.view(), array![1.0].view(), e1.view(), e2.view()).is_err());
    }

    proptest! {
        #[test]
        fn match_is_scale_invariant(
            v in prop::collection::vec(-5.0f64..5.0, 12),
            scales in prop::collection::vec(0.01f64..100.0, 4),
        ) {
            let p1 = Array1::from(v[0..3].to_vec());
            let p2 = Array1::from(v[3..6].to_vec());
            let t1 = Array1::from(v[6..9].to_vec());
            let t2 = Array1::from(v[9..12].to_vec());
            let base = match_pair(p1.view(), p2.view(), t1.view(), t2.view()).unwrap();
            let margin = base.similarities[0] + base.similarities[1]
                - base.similarities[2] - base.similarities[3];
            prop_assume!(margin.abs() > 1e-9);
            let scaled = match_pair(
                (&p1 * scales[0]).view(),
                (&p2 * scales[1]).view(),
                (&t1 * scales[2]).view(),
                (&t2 * scales[3]).view(),
            ).unwrap();
            prop_assert_eq!(base.correct, scaled.correct);
        }
    }
}
