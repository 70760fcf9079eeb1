//! Synthetic subjects with planted embedding → response maps, and a
//! standalone reference implementation of the leave-two-out protocol.
//!
//! The reference implementation deliberately shares nothing with
//! [`crate::evaluation`] or [`crate::regressor`]: it averages trials by
//! scanning the raw trial matrix, z-scores with its own loops and solves
//! the ridge system with nalgebra.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{StimulusVocabulary, SubjectDataset};
use crate::embeddings::{EmbeddingTable, VecFormat};
use crate::evaluation::Direction;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapKind {
    Linear,
    Tanh,
    /// First half of the voxels depends only on the first half of the
    /// embedding dimensions, the second half only on the second.
    DualBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_words: usize,
    pub n_voxels: usize,
    pub emb_dim: usize,
    pub presentations: usize,
    pub noise_sigma: f64,
    pub map_kind: MapKind,
    pub seed: u64,
    /// Extra voxels of unit-variance noise unrelated to any word.
    #[serde(default)]
    pub null_voxels: usize,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_words == 0 || self.n_voxels == 0 || self.emb_dim == 0 || self.presentations == 0 {
            return Err(Error::argument("synthetic counts must all be at least 1"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::argument("noise_sigma must be a finite non-negative number"));
        }
        if self.map_kind == MapKind::DualBlock && (!self.emb_dim.is_multiple_of(2) || self.n_voxels < 2) {
            return Err(Error::argument(
                "dual-block maps need an even embedding dimension and at least 2 voxels",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedMap {
    pub kind: MapKind,
    /// `emb_dim × n_voxels`; null voxels are not part of the map.
    pub weights: Array2<f64>,
}

impl PlantedMap {
    /// Noise-free responses for a block of embedding rows.
    pub fn apply(&self, embeddings: &Array2<f64>) -> Array2<f64> {
        let r = embeddings.dot(&self.weights);
        match self.kind {
            MapKind::Tanh => r.mapv(f64::tanh),
            MapKind::Linear | MapKind::DualBlock => r,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub spec: SynthSpec,
    pub vocab: StimulusVocabulary,
    pub dataset: SubjectDataset,
    pub table: EmbeddingTable,
    pub map: PlantedMap,
}

/// Word names `w00`, `w01`, … padded to a common width.
fn word_names(n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len().max(2);
    (0..n).map(|i| format!("w{i:0width$}")).collect()
}

/// Fully determined by the spec: standard-normal embeddings, a Gaussian
/// planted map scaled to roughly unit response variance, and per-trial
/// Gaussian noise of standard deviation `noise_sigma`.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, d, v, p) = (spec.n_words, spec.emb_dim, spec.n_voxels, spec.presentations);

    let embeddings = Array2::from_shape_simple_fn((w, d), || StandardNormal.sample(&mut rng));
    let weights = match spec.map_kind {
        MapKind::Linear | MapKind::Tanh => {
            let scale = 1.0 / (d as f64).sqrt();
            Array2::from_shape_simple_fn((d, v), || {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * z
            })
        }
        MapKind::DualBlock => {
            let (half_d, half_v) = (d / 2, v / 2);
            let scale = 1.0 / (half_d as f64).sqrt();
            let mut a = Array2::zeros((d, v));
            for col in 0..v {
                let dims = if col < half_v { 0..half_d } else { half_d..d };
                for row in dims {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    a[[row, col]] = scale * z;
                }
            }
            a
        }
    };
    let map = PlantedMap {
        kind: spec.map_kind,
        weights,
    };
    let clean = map.apply(&embeddings);

    let noise = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
    let total_v = v + spec.null_voxels;
    let mut trials = Array2::zeros((w * p, total_v));
    let mut trial_word = Vec::with_capacity(w * p);
    let mut trial_presentation = Vec::with_capacity(w * p);
    for pres in 0..p {
        for word in 0..w {
            let row = pres * w + word;
            for vox in 0..v {
                trials[[row, vox]] = clean[[word, vox]] + noise.sample(&mut rng);
            }
            for vox in v..total_v {
                trials[[row, vox]] = StandardNormal.sample(&mut rng);
            }
            trial_word.push(word);
            trial_presentation.push(pres);
        }
    }
    let coords = (0..total_v as i32)
        .map(|i| [i % 10, (i / 10) % 10, i / 100])
        .collect();

    let names = word_names(w);
    let entries = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), format!("group{}", i % 4)))
        .collect();
    let mut subsets = BTreeMap::new();
    subsets.insert("first-half".to_string(), names[..w.div_ceil(2)].to_vec());
    let vocab = StimulusVocabulary::new(entries, subsets)?;
    let dataset = SubjectDataset::new(
        format!("synth{}", spec.seed),
        trials,
        trial_word,
        trial_presentation,
        Some(coords),
    )?;
    let table = EmbeddingTable::new("synthetic", names, embeddings)?;
    Ok(SynthData {
        spec: spec.clone(),
        vocab,
        dataset,
        table,
        map,
    })
}

/// Independent standard-normal vectors for the given words.
pub fn random_table(words: &[String], dim: usize, seed: u64, model_name: &str) -> Result<EmbeddingTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vectors = Array2::from_shape_simple_fn((words.len(), dim), || StandardNormal.sample(&mut rng));
    EmbeddingTable::new(model_name, words.to_vec(), vectors)
}

impl SynthData {
    /// The two halves of the embedding table, named `block-a` and `block-b`.
    pub fn split_blocks(&self) -> Result<(EmbeddingTable, EmbeddingTable)> {
        let d = self.table.dim();
        if d < 2 || !d.is_multiple_of(2) {
            return Err(Error::argument("splitting needs an even embedding dimension"));
        }
        Ok((
            self.table.slice_dims(0..d / 2, "block-a")?,
            self.table.slice_dims(d / 2..d, "block-b")?,
        ))
    }

    /// Writes `words.csv`, `subject.tsv` (with `subject.coords.tsv`) and
    /// `embeddings.vec`, plus `block-a.vec`/`block-b.vec` for dual-block data.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.vocab.write(dir.join("words.csv"))?;
        self.dataset.write(dir.join("subject.tsv"), &self.vocab)?;
        self.table
            .write(dir.join("embeddings.vec"), VecFormat::HeaderedVec)?;
        if self.spec.map_kind == MapKind::DualBlock {
            let (a, b) = self.split_blocks()?;
            a.write(dir.join("block-a.vec"), VecFormat::HeaderedVec)?;
            b.write(dir.join("block-b.vec"), VecFormat::HeaderedVec)?;
        }
        Ok(())
    }
}

/// Per-fold correctness of the reference implementation, in lexicographic
/// pair order over the dataset's words (ascending vocabulary id).
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub correct: Vec<bool>,
    pub accuracy: f64,
}

/// Straight-line leave-two-out with closed-form ridge per fold, no voxel
/// selection, every voxel.
///
/// `lambda` has the regressor's meaning: the penalty on the sum of squared
/// weights next to a squared error averaged over rows and outputs.
pub fn oracle_leave_two_out(
    ds: &SubjectDataset,
    vocab: &StimulusVocabulary,
    table: &EmbeddingTable,
    direction: Direction,
    lambda: f64,
) -> Result<OracleResult> {
    let ids = ds.words_present();
    let n = ids.len();
    if n < 4 {
        return Err(Error::argument("oracle needs at least 4 words"));
    }
    let n_vox = ds.n_voxels();

    // mean response per word by scanning every trial
    let mut brain = DMatrix::<f64>::zeros(n, n_vox);
    let mut counts = vec![0usize; n];
    for t in 0..ds.n_trials() {
        let word = ds.trial_word()[t];
        let row = ids.binary_search(&word).expect("word present");
        counts[row] += 1;
        for v in 0..n_vox {
            brain[(row, v)] += ds.trials()[[t, v]];
        }
    }
    for (row, &c) in counts.iter().enumerate() {
        for v in 0..n_vox {
            brain[(row, v)] /= c as f64;
        }
    }

    let dim = table.dim();
    let mut emb = DMatrix::<f64>::zeros(n, dim);
    for (row, &id) in ids.iter().enumerate() {
        let vector = table.get(vocab.word(id)).ok_or_else(|| Error::OutOfVocabulary {
            model: table.model_name().to_string(),
            words: vec![vocab.word(id).to_string()],
        })?;
        for k in 0..dim {
            emb[(row, k)] = vector[k];
        }
    }

    let (inputs, targets) = match direction {
        Direction::WordToBrain => (&emb, &brain),
        Direction::BrainToWord => (&brain, &emb),
    };

    let mut correct = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let train: Vec<usize> = (0..n).filter(|&k| k != i && k != j).collect();
            let x = inputs.select_rows(&train);
            let y = targets.select_rows(&train);
            let (x_mean, x_sd) = column_moments(&x);
            let (y_mean, y_sd) = column_moments(&y);
            let xs = zscore(&x, &x_mean, &x_sd);
            let ys = zscore(&y, &y_mean, &y_sd);

            let penalty = lambda * (train.len() * ys.ncols()) as f64;
            let weights = if xs.ncols() <= xs.nrows() {
                let gram = xs.transpose() * &xs + DMatrix::identity(xs.ncols(), xs.ncols()) * penalty;
                let chol = gram
                    .cholesky()
                    .ok_or_else(|| Error::Numeric("oracle ridge system is singular".into()))?;
                chol.solve(&(xs.transpose() * &ys))
            } else {
                let gram = &xs * xs.transpose() + DMatrix::identity(xs.nrows(), xs.nrows()) * penalty;
                let chol = gram
                    .cholesky()
                    .ok_or_else(|| Error::Numeric("oracle ridge system is singular".into()))?;
                xs.transpose() * chol.solve(&ys)
            };

            let held_x = zscore(&inputs.select_rows(&[i, j]), &x_mean, &x_sd);
            let held_y = zscore(&targets.select_rows(&[i, j]), &y_mean, &y_sd);
            let pred = held_x * weights;
            let cos = |a: usize, b: usize| {
                let p = pred.row(a);
                let t = held_y.row(b);
                let (pn, tn) = (p.norm(), t.norm());
                if pn == 0.0 || tn == 0.0 {
                    0.0
                } else {
                    p.dot(&t) / (pn * tn)
                }
            };
            correct.push(cos(0, 0) + cos(1, 1) > cos(0, 1) + cos(1, 0));
        }
    }
    let accuracy = correct.iter().filter(|&&c| c).count() as f64 / correct.len() as f64;
    Ok(OracleResult { correct, accuracy })
}

fn column_moments(m: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
    let rows = m.nrows() as f64;
    let mut mean = DVector::zeros(m.ncols());
    let mut sd = DVector::zeros(m.ncols());
    for c in 0..m.ncols() {
        let col = m.column(c);
        let mu = col.sum() / rows;
        let var = col.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / rows;
        mean[c] = mu;
        sd[c] = var.sqrt().max(1e-8);
    }
    (mean, sd)
}

fn zscore(m: &DMatrix<f64>, mean: &DVector<f64>, sd: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| (m[(r, c)] - mean[c]) / sd[c])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(map_kind: MapKind, sigma: f64, seed: u64) -> SynthSpec {
        SynthSpec {
            n_words: 20,
            n_voxels: 30,
            emb_dim: 8,
            presentations: 6,
            noise_sigma: sigma,
            map_kind,
            seed,
            null_voxels: 0,
        }
    }

    #[test]
    fn noiseless_rows_equal_mapped_embeddings() {
        let data = generate_synthetic(&spec(MapKind::Linear, 0.0, 1)).unwrap();
        let clean = data.map.apply(data.table.vectors());
        for (t, row) in data.dataset.trials().rows().into_iter().enumerate() {
            let w = data.dataset.trial_word()[t];
            assert_eq!(row, clean.row(w));
        }
    }

    #[test]
    fn counts_and_determinism() {
        let s = spec(MapKind::Tanh, 0.3, 5);
        let a = generate_synthetic(&s).unwrap();
        let b = generate_synthetic(&s).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.table, b.table);
        assert_eq!(a.dataset.n_trials(), 120);
        assert_eq!(a.dataset.presentations(), 6);
        assert_eq!(a.vocab.len(), 20);
    }

    #[test]
    fn dual_block_structure() {
        let data = generate_synthetic(&spec(MapKind::DualBlock, 0.0, 2)).unwrap();
        let w = &data.map.weights;
        for row in 0..4 {
            assert!(w.row(row).iter().skip(15).all(|&x| x == 0.0));
            assert!(w.row(row + 4).iter().take(15).all(|&x| x == 0.0));
        }
        let (a, b) = data.split_blocks().unwrap();
        assert_eq!((a.dim(), b.dim()), (4, 4));
        let odd = SynthSpec { emb_dim: 7, ..spec(MapKind::DualBlock, 0.0, 2) };
        assert!(generate_synthetic(&odd).is_err());
    }

    #[test]
    fn null_voxels_appended() {
        let s = SynthSpec { null_voxels: 5, ..spec(MapKind::Linear, 0.0, 3) };
        let data = generate_synthetic(&s).unwrap();
        assert_eq!(data.dataset.n_voxels(), 35);
    }

    #[test]
    fn write_emits_loadable_files() {
        let dir = tempfile::tempdir().unwrap();
        let data = generate_synthetic(&spec(MapKind::DualBlock, 0.1, 4)).unwrap();
        data.write(dir.path()).unwrap();
        let vocab = StimulusVocabulary::load(dir.path().join("words.csv")).unwrap();
        let ds = SubjectDataset::load(dir.path().join("subject.tsv"), &vocab).unwrap();
        assert_eq!(ds, data.dataset);
        let t = EmbeddingTable::load(dir.path().join("embeddings.vec"), VecFormat::HeaderedVec, "synthetic").unwrap();
        assert_eq!(t, data.table);
        assert!(dir.path().join("block-b.vec").exists());
    }

    #[test]
    fn noiseless_oracle_is_perfect() {
        let data = generate_synthetic(&spec(MapKind::Linear, 0.0, 7)).unwrap();
        let r = oracle_leave_two_out(&data.dataset, &data.vocab, &data.table, Direction::WordToBrain, 0.001).unwrap();
        assert_eq!(r.correct.len(), 190);
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn shuffled_assignment_is_chance() {
        let mut total = 0.0;
        for seed in 0..10 {
            let data = generate_synthetic(&spec(MapKind::Linear, 0.1, 100 + seed)).unwrap();
            let mut words = data.table.words().to_vec();
            // rotate word labels so every word gets another word's vector
            words.rotate_left(1 + seed as usize % 5);
            let shuffled = EmbeddingTable::new("shuffled", words, data.table.vectors().clone()).unwrap();
            total += oracle_leave_two_out(&data.dataset, &data.vocab, &shuffled, Direction::WordToBrain, 0.001)
                .unwrap()
                .accuracy;
        }
        let mean = total / 10.0;
        assert!((mean - 0.5).abs() <= 0.05, "mean {mean}");
    }

    #[test]
    fn oracle_accuracy_weakly_decreases_with_noise() {
        let mean_acc = |sigma: f64| {
            (0..4)
                .map(|seed| {
                    let s = SynthSpec { emb_dim: 4, ..spec(MapKind::Linear, sigma, 40 + seed) };
                    let data = generate_synthetic(&s).unwrap();
                    oracle_leave_two_out(&data.dataset, &data.vocab, &data.table, Direction::WordToBrain, 0.001)
                        .unwrap()
                        .accuracy
                })
                .sum::<f64>()
                / 4.0
        };
        let accs: Vec<f64> = [0.0, 0.5, 2.0].into_iter().map(mean_acc).collect();
        assert!(accs[0] >= accs[1] && accs[1] >= accs[2], "{accs:?}");
    }
}
