//! Error and voxel overlap between two runs.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use neurodecode::analysis::{matrix_overlap, top_k_overlap, MismatchMatrix, VoxelPredictability};

use crate::svg::{scatter, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CompareMode {
    /// Compare error pairs of two mismatch matrix CSVs.
    MismatchOverlap,
    /// Compare top-k voxels of two voxel predictability CSVs.
    VoxelOverlap,
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub csv: PathBuf,
    pub svg: PathBuf,
    pub jaccard: f64,
}

fn label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

/// Writes `<mode>.csv` and `<mode>.svg` into `out`.
pub fn compare(
    mode: CompareMode,
    a: &Path,
    b: &Path,
    threshold: f64,
    k: usize,
    out: &Path,
) -> Result<CompareReport> {
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let (la, lb) = (label(a), label(b));
    let (stem, csv, svg, jaccard) = match mode {
        CompareMode::MismatchOverlap => {
            let ma = MismatchMatrix::load_csv(a, &la)?;
            let mb = MismatchMatrix::load_csv(b, &lb)?;
            let report = matrix_overlap(&ma, &mb, threshold)
                .with_context(|| format!("cannot compare {} and {}", a.display(), b.display()))?;
            let index: HashMap<&str, usize> =
                ma.words.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
            let points: Vec<Point> = report
                .memberships()
                .map(|(p, m)| Point {
                    x: index[p.0.as_str()] as f64,
                    y: index[p.1.as_str()] as f64,
                    label: p.to_string(),
                    membership: m,
                })
                .collect();
            let top = ma.words.len().saturating_sub(1) as f64;
            let title = format!("error pairs: {la} (a) vs {lb} (b), jaccard {:.3}", report.jaccard);
            let svg = scatter(&title, ("first word", "second word"), (0.0, top), (0.0, top), &points);
            ("mismatch_overlap", report.to_csv(), svg, report.jaccard)
        }
        CompareMode::VoxelOverlap => {
            let va = VoxelPredictability::load_csv(a, &la, "")?;
            let vb = VoxelPredictability::load_csv(b, &lb, "")?;
            let report = top_k_overlap(&va, &vb, k)
                .with_context(|| format!("cannot compare {} and {}", a.display(), b.display()))?;
            let membership: HashMap<usize, &'static str> =
                report.memberships().map(|(&v, m)| (v, m)).collect();
            let points: Vec<Point> = va
                .scores
                .iter()
                .zip(&vb.scores)
                .enumerate()
                .filter_map(|(v, (sa, sb))| {
                    Some(Point {
                        x: (*sa)?,
                        y: (*sb)?,
                        label: format!("voxel {v}"),
                        membership: membership.get(&v).copied().unwrap_or("none"),
                    })
                })
                .collect();
            let title = format!("top-{k} voxels: {la} (a) vs {lb} (b), jaccard {:.3}", report.jaccard);
            let svg = scatter(&title, ("score a", "score b"), (-1.0, 1.0), (-1.0, 1.0), &points);
            ("voxel_overlap", report.to_csv(), svg, report.jaccard)
        }
    };
    let csv_path = out.join(format!("{stem}.csv"));
    let svg_path = out.join(format!("{stem}.svg"));
    write(&csv_path, &csv)?;
    write(&svg_path, &svg)?;
    Ok(CompareReport {
        csv: csv_path,
        svg: svg_path,
        jaccard,
    })
}
