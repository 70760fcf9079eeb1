use ndarray::Array2;

use super::SubjectDataset;
use crate::{Error, Result};

/// A presentation whose response vector has relative variance below this
/// (sum of squared deviations over raw sum of squares) is treated as
/// constant.
const DEGENERATE_REL_VARIANCE: f64 = 1e-12;

/// Score given to voxels whose responses are constant in some presentation.
const DEGENERATE_SCORE: f64 = -1.0;

fn check_training(ds: &SubjectDataset, words: &[usize]) -> Result<()> {
    if words.len() < 2 {
        return Err(Error::argument(format!(
            "stability needs at least 2 training words, got {}",
            words.len()
        )));
    }
    if ds.presentations() < 2 {
        return Err(Error::argument("stability needs at least 2 presentations"));
    }
    if let Some(w) = words.iter().find(|&&w| !ds.contains_word(w)) {
        return Err(Error::Vocabulary(format!("word id {w} has no trials")));
    }
    Ok(())
}

fn presentation_pairs(p: usize) -> Vec<(usize, usize)> {
    (0..p)
        .flat_map(|a| ((a + 1)..p).map(move |b| (a, b)))
        .collect()
}

/// Mean cross-presentation Pearson correlation of every voxel's response
/// profile over `training_words`.
///
/// This is the direct two-pass computation; [`StabilityStats`] produces the
/// same scores incrementally for leave-two-out folds.
pub fn compute_stability_scores(ds: &SubjectDataset, training_words: &[usize]) -> Result<Vec<f64>> {
    check_training(ds, training_words)?;
    let p = ds.presentations();
    let n = training_words.len() as f64;
    let pairs = presentation_pairs(p);

    let mut scores = Vec::with_capacity(ds.n_voxels());
    let mut profile = vec![vec![0.0; training_words.len()]; p];
    for v in 0..ds.n_voxels() {
        for (a, prof) in profile.iter_mut().enumerate() {
            for (slot, &w) in prof.iter_mut().zip(training_words) {
                *slot = ds.trial(w, a)[v];
            }
        }
        let mut means = vec![0.0; p];
        let mut ss = vec![0.0; p];
        let mut degenerate = false;
        for a in 0..p {
            let m = profile[a].iter().sum::<f64>() / n;
            let s: f64 = profile[a].iter().map(|x| (x - m) * (x - m)).sum();
            let raw: f64 = profile[a].iter().map(|x| x * x).sum();
            means[a] = m;
            ss[a] = s;
            degenerate |= s <= DEGENERATE_REL_VARIANCE * raw;
        }
        if degenerate {
            scores.push(DEGENERATE_SCORE);
            continue;
        }
        let mut total = 0.0;
        for &(a, b) in &pairs {
            let cov: f64 = profile[a]
                .iter()
                .zip(&profile[b])
                .map(|(x, y)| (x - means[a]) * (y - means[b]))
                .sum();
            total += cov / (ss[a] * ss[b]).sqrt();
        }
        scores.push((total / pairs.len() as f64).clamp(-1.0, 1.0));
    }
    Ok(scores)
}

/// Sufficient statistics for stability scores over a fixed word set, from
/// which the scores of any subset that drops a few words follow in
/// O(voxels · presentations²).
///
/// Values are shifted by their full-set per-voxel mean before accumulation
/// so the subtraction does not lose precision.
#[derive(Debug, Clone)]
pub struct StabilityStats<'a> {
    ds: &'a SubjectDataset,
    words: Vec<usize>,
    pairs: Vec<(usize, usize)>,
    shift: Array2<f64>,
    sum: Array2<f64>,
    sumsq: Array2<f64>,
    cross: Array2<f64>,
}

impl<'a> StabilityStats<'a> {
    pub fn new(ds: &'a SubjectDataset, words: &[usize]) -> Result<Self> {
        check_training(ds, words)?;
        let p = ds.presentations();
        let v = ds.n_voxels();
        let pairs = presentation_pairs(p);

        let mut shift = Array2::<f64>::zeros((p, v));
        for a in 0..p {
            let mut row = shift.row_mut(a);
            for &w in words {
                row += &ds.trial(w, a);
            }
            row /= words.len() as f64;
        }

        let mut sum = Array2::<f64>::zeros((p, v));
        let mut sumsq = Array2::<f64>::zeros((p, v));
        let mut cross = Array2::<f64>::zeros((pairs.len(), v));
        let mut centered = Array2::<f64>::zeros((p, v));
        for &w in words {
            for a in 0..p {
                let mut c = centered.row_mut(a);
                c.assign(&ds.trial(w, a));
                c -= &shift.row(a);
            }
            accumulate(&centered, &pairs, &mut sum, &mut sumsq, &mut cross, 1.0);
        }

        Ok(StabilityStats {
            ds,
            words: words.to_vec(),
            pairs,
            shift,
            sum,
            sumsq,
            cross,
        })
    }

    pub fn words(&self) -> &[usize] {
        &self.words
    }

    /// Stability scores over the stored word set minus `held_out`.
    pub fn scores_excluding(&self, held_out: &[usize]) -> Result<Vec<f64>> {
        let mut unique = held_out.to_vec();
        unique.sort_unstable();
        unique.dedup();
        if let Some(w) = unique.iter().find(|w| !self.words.contains(w)) {
            return Err(Error::argument(format!(
                "held-out word id {w} is not in the stability word set"
            )));
        }
        let n_train = self.words.len() - unique.len();
        if n_train < 2 {
            return Err(Error::argument(format!(
                "stability needs at least 2 training words, got {n_train}"
            )));
        }

        let p = self.ds.presentations();
        let v = self.ds.n_voxels();
        let mut sum = self.sum.clone();
        let mut sumsq = self.sumsq.clone();
        let mut cross = self.cross.clone();
        let mut centered = Array2::<f64>::zeros((p, v));
        for &w in &unique {
            for a in 0..p {
                let mut c = centered.row_mut(a);
                c.assign(&self.ds.trial(w, a));
                c -= &self.shift.row(a);
            }
            accumulate(&centered, &self.pairs, &mut sum, &mut sumsq, &mut cross, -1.0);
        }

        let n = n_train as f64;
        let mut scores = Vec::with_capacity(v);
        let mut ss = vec![0.0; p];
        for vox in 0..v {
            let mut degenerate = false;
            for a in 0..p {
                let s = sum[[a, vox]];
                let q = sumsq[[a, vox]];
                let dev = (q - s * s / n).max(0.0);
                let mean_raw = self.shift[[a, vox]] + s / n;
                let raw = dev + n * mean_raw * mean_raw;
                ss[a] = dev;
                degenerate |= dev <= DEGENERATE_REL_VARIANCE * raw;
            }
            if degenerate {
                scores.push(DEGENERATE_SCORE);
                continue;
            }
            let mut total = 0.0;
            for (k, &(a, b)) in self.pairs.iter().enumerate() {
                let cov = cross[[k, vox]] - sum[[a, vox]] * sum[[b, vox]] / n;
                total += cov / (ss[a] * ss[b]).sqrt();
            }
            scores.push((total / self.pairs.len() as f64).clamp(-1.0, 1.0));
        }
        Ok(scores)
    }
}

fn accumulate(
    centered: &Array2<f64>,
    pairs: &[(usize, usize)],
    sum: &mut Array2<f64>,
    sumsq: &mut Array2<f64>,
    cross: &mut Array2<f64>,
    sign: f64,
) {
    for a in 0..centered.nrows() {
        let x = centered.row(a);
        sum.row_mut(a).scaled_add(sign, &x);
        sumsq
            .row_mut(a)
            .zip_mut_with(&x, |acc, &xi| *acc += sign * xi * xi);
    }
    for (k, &(a, b)) in pairs.iter().enumerate() {
        let mut c = cross.row_mut(k);
        for ((acc, xa), xb) in c.iter_mut().zip(centered.row(a)).zip(centered.row(b)) {
            *acc += sign * xa * xb;
        }
    }
}

/// The `k` highest-scoring voxels, ascending by index.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelSelection {
    pub indices: Vec<usize>,
    pub scores: Vec<f64>,
    pub k: usize,
}

/// Picks the `k` highest scores; equal scores prefer the lower index.
pub fn select_top_voxels(scores: &[f64], k: usize) -> Result<VoxelSelection> {
    if k == 0 || k > scores.len() {
        return Err(Error::argument(format!(
            "selection size {k} outside 1..={}",
            scores.len()
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut indices = order[..k].to_vec();
    indices.sort_unstable();
    Ok(VoxelSelection {
        indices,
        scores: scores.to_vec(),
        k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(words: usize, pres: usize, vox: usize, mut value: impl FnMut(usize, usize, usize) -> f64) -> SubjectDataset {
        let mut rows = Vec::new();
        let mut tw = Vec::new();
        let mut tp = Vec::new();
        for p in 0..pres {
            for w in 0..words {
                for v in 0..vox {
                    rows.push(value(w, p, v));
                }
                tw.push(w);
                tp.push(p);
            }
        }
        let trials = Array2::from_shape_vec((words * pres, vox), rows).unwrap();
        SubjectDataset::new("t", trials, tw, tp, None).unwrap()
    }

    /// Naive Pearson oracle: plain sums, no shared code with the module.
    fn brute_pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let mut num = 0.0;
        let mut dx = 0.0;
        let mut dy = 0.0;
        for i in 0..x.len() {
            num += (x[i] - mx) * (y[i] - my);
            dx += (x[i] - mx).powi(2);
            dy += (y[i] - my).powi(2);
        }
        num / (dx * dy).sqrt()
    }

    #[test]
    fn identical_presentations_score_one() {
        let ds = dataset(5, 3, 2, |w, _, v| (w * w) as f64 + v as f64);
        let s = compute_stability_scores(&ds, &[0, 1, 2, 3, 4]).unwrap();
        for x in s {
            assert!((x - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_built_three_word_case() {
        // voxel 0: p0 = (1,2,3), p1 = (2,1,4); voxel 1: p0 = (0,1,0), p1 = (1,0,1)
        let p0 = [[1.0, 0.0], [2.0, 1.0], [3.0, 0.0]];
        let p1 = [[2.0, 1.0], [1.0, 0.0], [4.0, 1.0]];
        let ds = dataset(3, 2, 2, |w, p, v| if p == 0 { p0[w][v] } else { p1[w][v] });
        let s = compute_stability_scores(&ds, &[0, 1, 2]).unwrap();
        // voxel 0: dev p0 = (-1,0,1), dev p1 = (-1/3,-4/3,5/3); cov = 2, ss0 = 2, ss1 = 42/9
        let expected0 = 2.0 / (2.0_f64 * 42.0 / 9.0).sqrt();
        assert!((s[0] - expected0).abs() < 1e-12, "{}", s[0]);
        assert!((s[0] - brute_pearson(&[1.0, 2.0, 3.0], &[2.0, 1.0, 4.0])).abs() < 1e-12);
        // voxel 1 is perfectly anticorrelated
        assert!((s[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_voxel_scores_minus_one() {
        let ds = dataset(4, 2, 2, |w, p, v| if v == 0 { 5.0 } else { (w + p) as f64 });
        let s = compute_stability_scores(&ds, &[0, 1, 2, 3]).unwrap();
        assert_eq!(s[0], -1.0);
        assert!(s[1] > 0.99);
    }

    #[test]
    fn random_voxel_scores_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise: Vec<f64> = (0..60 * 6).map(|_| rng.random::<f64>() - 0.5).collect();
        let ds = dataset(60, 6, 1, |w, p, _| noise[p * 60 + w]);
        let train: Vec<usize> = (0..58).collect();
        let s = compute_stability_scores(&ds, &train).unwrap();
        let mut oracle = 0.0;
        let mut count = 0.0;
        for a in 0..6 {
            for b in (a + 1)..6 {
                let x: Vec<f64> = train.iter().map(|&w| noise[a * 60 + w]).collect();
                let y: Vec<f64> = train.iter().map(|&w| noise[b * 60 + w]).collect();
                oracle += brute_pearson(&x, &y);
                count += 1.0;
            }
        }
        oracle /= count;
        assert!((s[0] - oracle).abs() < 1e-12);
        assert!(s[0].abs() < 0.3, "{}", s[0]);
    }

    #[test]
    fn too_few_training_words() {
        let ds = dataset(3, 2, 1, |w, p, _| (w + p) as f64);
        assert!(matches!(compute_stability_scores(&ds, &[1]), Err(Error::Argument(_))));
        let one_pres = dataset(3, 1, 1, |w, _, _| w as f64);
        assert!(compute_stability_scores(&one_pres, &[0, 1]).is_err());
    }

    #[test]
    fn incremental_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let signal: Vec<f64> = (0..12 * 7).map(|_| rng.random::<f64>() * 4.0 + 100.0).collect();
        let noise: Vec<f64> = (0..12 * 4 * 7).map(|_| rng.random::<f64>()).collect();
        let ds = dataset(12, 4, 7, |w, p, v| {
            if v == 6 { 1.0 } else { signal[w * 7 + v] + noise[(p * 12 + w) * 7 + v] }
        });
        let all: Vec<usize> = (0..12).collect();
        let stats = StabilityStats::new(&ds, &all).unwrap();
        for (i, j) in [(0, 1), (3, 11), (5, 6)] {
            let train: Vec<usize> = all.iter().copied().filter(|&w| w != i && w != j).collect();
            let direct = compute_stability_scores(&ds, &train).unwrap();
            let inc = stats.scores_excluding(&[i, j]).unwrap();
            for (a, b) in direct.iter().zip(&inc) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
            assert_eq!(inc[6], -1.0);
        }
        assert!(stats.scores_excluding(&[99]).is_err());
    }

    #[test]
    fn top_voxels() {
        assert_eq!(select_top_voxels(&[0.1, 0.9, 0.5], 2).unwrap().indices, vec![1, 2]);
        assert_eq!(select_top_voxels(&[0.3, 0.3, 0.3], 2).unwrap().indices, vec![0, 1]);
        assert_eq!(select_top_voxels(&[0.3, -1.0, 0.2], 3).unwrap().indices, vec![0, 1, 2]);
        assert!(select_top_voxels(&[0.3], 0).is_err());
        assert!(select_top_voxels(&[0.3], 2).is_err());
        let _ = array![1.0];
    }
}
