//! Post-hoc analyses of completed leave-two-out runs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{Display, Write as _};
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::dataset::StimulusVocabulary;
use crate::evaluation::{Direction, EvalResult};
use crate::linalg::pearson;
use crate::{Error, Result};

/// Symmetric word × word record of failed pair discriminations. Entries are
/// 0/1 for one subject and fractions once averaged over subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct MismatchMatrix {
    pub values: Array2<f64>,
    pub words: Vec<String>,
    pub model_name: String,
    pub subjects: Vec<String>,
}

/// Entry `(i, j)` is 1 iff the fold holding out words `i` and `j` failed.
pub fn mismatch_matrix(r: &EvalResult) -> MismatchMatrix {
    let n = r.words.len();
    let mut values = Array2::zeros((n, n));
    for f in r.folds.iter().filter(|f| !f.correct) {
        let (i, j) = f.pair;
        values[[i, j]] = 1.0;
        values[[j, i]] = 1.0;
    }
    MismatchMatrix {
        values,
        words: r.words.clone(),
        model_name: r.model_name.clone(),
        subjects: vec![r.subject_id.clone()],
    }
}

/// Elementwise mean over matrices sharing word order and model.
pub fn average_mismatch(ms: &[MismatchMatrix]) -> Result<MismatchMatrix> {
    let first = ms
        .first()
        .ok_or_else(|| Error::argument("no mismatch matrices to average"))?;
    let mut sum = Array2::<f64>::zeros(first.values.dim());
    let mut subjects = Vec::new();
    for m in ms {
        if m.words != first.words {
            return Err(Error::argument("mismatch matrices have different word orders"));
        }
        if m.model_name != first.model_name {
            return Err(Error::argument(format!(
                "cannot average models '{}' and '{}'",
                first.model_name, m.model_name
            )));
        }
        sum += &m.values;
        subjects.extend(m.subjects.iter().cloned());
    }
    Ok(MismatchMatrix {
        values: sum / ms.len() as f64,
        words: first.words.clone(),
        model_name: first.model_name.clone(),
        subjects,
    })
}

impl MismatchMatrix {
    /// Sum of the upper triangle.
    pub fn error_mass(&self) -> f64 {
        let n = self.words.len();
        (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| self.values[[i, j]])
            .sum()
    }

    /// Unordered pairs `(i, j)`, `i < j`, whose value exceeds `threshold`.
    pub fn error_pairs(&self, threshold: f64) -> BTreeSet<(usize, usize)> {
        let n = self.words.len();
        (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.values[[i, j]] > threshold)
            .collect()
    }

    /// CSV: a header row of words, then one row of values per word.
    pub fn to_csv(&self) -> String {
        let mut out = self.words.join(",");
        out.push('\n');
        for row in self.values.rows() {
            let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv(text: &str, model_name: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::format_any("empty mismatch matrix file"))?;
        let words: Vec<String> = header.split(',').map(|w| w.trim().to_string()).collect();
        let n = words.len();
        let mut values = Vec::with_capacity(n * n);
        let mut rows = 0;
        for (i, line) in lines.enumerate() {
            let row: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::format(i + 2, "invalid matrix value"))?;
            if row.len() != n {
                return Err(Error::format(i + 2, format!("expected {n} values")));
            }
            values.extend(row);
            rows += 1;
        }
        if rows != n {
            return Err(Error::format_any(format!("expected {n} rows, found {rows}")));
        }
        let values = Array2::from_shape_vec((n, n), values).expect("checked shape");
        for i in 0..n {
            if values[[i, i]] != 0.0 || (0..n).any(|j| values[[i, j]] != values[[j, i]]) {
                return Err(Error::format_any("mismatch matrix must be symmetric with zero diagonal"));
            }
        }
        Ok(MismatchMatrix {
            values,
            words,
            model_name: model_name.to_string(),
            subjects: Vec::new(),
        })
    }

    pub fn load_csv(path: impl AsRef<Path>, model_name: &str) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text, model_name)
    }
}

/// Partition of two item sets into shared and exclusive members.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapReport<T> {
    pub common: Vec<T>,
    pub only_a: Vec<T>,
    pub only_b: Vec<T>,
    /// `|common| / |union|`, with an empty union counting as 1.
    pub jaccard: f64,
}

impl<T: Ord + Clone> OverlapReport<T> {
    pub fn from_sets(a: &BTreeSet<T>, b: &BTreeSet<T>) -> Self {
        let common: Vec<T> = a.intersection(b).cloned().collect();
        let only_a: Vec<T> = a.difference(b).cloned().collect();
        let only_b: Vec<T> = b.difference(a).cloned().collect();
        let union = common.len() + only_a.len() + only_b.len();
        let jaccard = if union == 0 {
            1.0
        } else {
            common.len() as f64 / union as f64
        };
        OverlapReport {
            common,
            only_a,
            only_b,
            jaccard,
        }
    }

    /// Every item with its membership label, in `common`, `only_a`,
    /// `only_b` order.
    pub fn memberships(&self) -> impl Iterator<Item = (&T, &'static str)> {
        self.common
            .iter()
            .map(|t| (t, "common"))
            .chain(self.only_a.iter().map(|t| (t, "only_a")))
            .chain(self.only_b.iter().map(|t| (t, "only_b")))
    }

    /// `item,membership` rows followed by `jaccard,<value>`.
    pub fn to_csv_with(&self, mut item: impl FnMut(&T) -> String) -> String {
        let mut out = String::from("item,membership\n");
        for (t, m) in self.memberships() {
            let _ = writeln!(out, "{},{m}", item(t));
        }
        let _ = writeln!(out, "jaccard,{}", self.jaccard);
        out
    }
}

impl<T: Ord + Clone + Display> OverlapReport<T> {
    pub fn to_csv(&self) -> String {
        self.to_csv_with(|t| t.to_string())
    }
}

/// A word pair rendered as `first/second`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct WordPair(pub String, pub String);

impl Display for WordPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.0, self.1)
    }
}

/// Error pairs of each matrix (value above `threshold`) split into shared
/// and model-specific pairs.
pub fn matrix_overlap(
    a: &MismatchMatrix,
    b: &MismatchMatrix,
    threshold: f64,
) -> Result<OverlapReport<WordPair>> {
    if a.words != b.words {
        return Err(Error::argument("mismatch matrices have different word orders"));
    }
    let named = |m: &MismatchMatrix| -> BTreeSet<WordPair> {
        m.error_pairs(threshold)
            .into_iter()
            .map(|(i, j)| WordPair(m.words[i].clone(), m.words[j].clone()))
            .collect()
    };
    Ok(OverlapReport::from_sets(&named(a), &named(b)))
}

/// Row sums (error count, or error mass when averaged) per word, largest
/// first with ties in word order.
pub fn per_word_error(m: &MismatchMatrix) -> Vec<(String, f64)> {
    let mut out: Vec<(usize, f64)> = m
        .values
        .rows()
        .into_iter()
        .map(|r| r.sum())
        .enumerate()
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out.into_iter().map(|(i, e)| (m.words[i].clone(), e)).collect()
}

/// Per-word error mass summed by category label, largest first.
pub fn per_category_error(m: &MismatchMatrix, vocab: &StimulusVocabulary) -> Result<Vec<(String, f64)>> {
    let mut by_cat: BTreeMap<String, f64> = BTreeMap::new();
    for (word, err) in per_word_error(m) {
        let id = vocab
            .index_of(&word)
            .ok_or_else(|| Error::Vocabulary(format!("unknown word '{word}'")))?;
        *by_cat.entry(vocab.category(id).to_string()).or_default() += err;
    }
    let mut out: Vec<(String, f64)> = by_cat.into_iter().collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}

/// Per-voxel correlation across words between fold-averaged held-out
/// predictions and the actual responses. `None` marks voxels with fewer
/// than two contributing words or no variance.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelPredictability {
    pub scores: Vec<Option<f64>>,
    pub coords: Option<Vec<[i32; 3]>>,
    pub model_name: String,
    pub subject_id: String,
}

pub fn voxel_predictability(r: &EvalResult) -> Result<VoxelPredictability> {
    if r.direction != Direction::WordToBrain {
        return Err(Error::argument(
            "voxel predictability needs a word-to-brain run",
        ));
    }
    let responses = r
        .responses
        .as_ref()
        .ok_or_else(|| Error::argument("run did not retain held-out predictions"))?;
    let (n_words, n_vox) = responses.dim();
    let mut sum = Array2::<f64>::zeros((n_words, n_vox));
    let mut count = Array2::<u32>::zeros((n_words, n_vox));
    for fold in &r.folds {
        let held = fold
            .predictions
            .as_ref()
            .ok_or_else(|| Error::argument("run did not retain held-out predictions"))?;
        for (slot, word) in [fold.pair.0, fold.pair.1].into_iter().enumerate() {
            for (k, &v) in held.columns.iter().enumerate() {
                sum[[word, v]] += held.rows[[slot, k]];
                count[[word, v]] += 1;
            }
        }
    }

    let mut scores = Vec::with_capacity(n_vox);
    for v in 0..n_vox {
        let words: Vec<usize> = (0..n_words).filter(|&w| count[[w, v]] > 0).collect();
        if words.len() < 2 {
            scores.push(None);
            continue;
        }
        let predicted: Array1<f64> = words
            .iter()
            .map(|&w| sum[[w, v]] / count[[w, v]] as f64)
            .collect();
        let actual: Array1<f64> = words.iter().map(|&w| responses[[w, v]]).collect();
        scores.push(pearson(predicted.view(), actual.view()));
    }
    Ok(VoxelPredictability {
        scores,
        coords: r.voxel_coords.clone(),
        model_name: r.model_name.clone(),
        subject_id: r.subject_id.clone(),
    })
}

impl VoxelPredictability {
    pub fn scored_count(&self) -> usize {
        self.scores.iter().flatten().count()
    }

    /// Indices of the `k` best-scoring voxels, best first; missing scores
    /// are skipped and ties go to the lower index.
    pub fn top_k(&self, k: usize) -> Result<Vec<usize>> {
        let mut scored: Vec<(usize, f64)> = self
            .scores
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.map(|s| (i, s)))
            .collect();
        if k == 0 || k > scored.len() {
            return Err(Error::argument(format!(
                "top-{k} requested but {} voxels are scored",
                scored.len()
            )));
        }
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(scored.into_iter().take(k).map(|(i, _)| i).collect())
    }

    /// CSV `voxel,x,y,z,score`; coordinates blank when unknown, `NA` for
    /// missing scores.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("voxel,x,y,z,score\n");
        for (v, s) in self.scores.iter().enumerate() {
            let coords = match &self.coords {
                Some(c) => format!("{},{},{}", c[v][0], c[v][1], c[v][2]),
                None => ",,".to_string(),
            };
            let score = s.map_or_else(|| "NA".to_string(), |x| x.to_string());
            let _ = writeln!(out, "{v},{coords},{score}");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv(text: &str, model_name: &str, subject_id: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == "voxel,x,y,z,score" => {}
            _ => return Err(Error::format(1, "expected header 'voxel,x,y,z,score'")),
        }
        let mut scores = Vec::new();
        let mut coords = Vec::new();
        let mut have_coords = true;
        for (i, line) in lines {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 5 {
                return Err(Error::format(i + 1, "expected 5 fields"));
            }
            let voxel: usize = f[0]
                .parse()
                .map_err(|_| Error::format(i + 1, "invalid voxel index"))?;
            if voxel != scores.len() {
                return Err(Error::format(i + 1, "voxel rows must be consecutive from 0"));
            }
            if f[1..4].iter().all(|c| c.is_empty()) {
                have_coords = false;
            } else {
                let c: Vec<i32> = f[1..4]
                    .iter()
                    .map(|c| c.parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::format(i + 1, "invalid coordinate"))?;
                coords.push([c[0], c[1], c[2]]);
            }
            scores.push(match f[4] {
                "NA" => None,
                s => Some(
                    s.parse::<f64>()
                        .map_err(|_| Error::format(i + 1, "invalid score"))?,
                ),
            });
        }
        Ok(VoxelPredictability {
            coords: (have_coords && coords.len() == scores.len()).then_some(coords),
            scores,
            model_name: model_name.to_string(),
            subject_id: subject_id.to_string(),
        })
    }

    pub fn load_csv(path: impl AsRef<Path>, model_name: &str, subject_id: &str) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text, model_name, subject_id)
    }
}

/// Top-`k` voxel sets of two models over the same voxel space.
pub fn top_k_overlap(
    a: &VoxelPredictability,
    b: &VoxelPredictability,
    k: usize,
) -> Result<OverlapReport<usize>> {
    if a.scores.len() != b.scores.len() {
        return Err(Error::argument(format!(
            "voxel spaces differ: {} vs {} voxels",
            a.scores.len(),
            b.scores.len()
        )));
    }
    let sa: BTreeSet<usize> = a.top_k(k)?.into_iter().collect();
    let sb: BTreeSet<usize> = b.top_k(k)?.into_iter().collect();
    Ok(OverlapReport::from_sets(&sa, &sb))
}
