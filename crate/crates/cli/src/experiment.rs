//! Subjects × models × directions, and every artifact derived from them.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use neurodecode::analysis::{average_mismatch, mismatch_matrix, voxel_predictability, MismatchMatrix};
use neurodecode::dataset::{StimulusVocabulary, SubjectDataset};
use neurodecode::embeddings::{combine_tables, EmbeddingTable};
use neurodecode::evaluation::{run_leave_two_out, Direction, EvalConfig};

use crate::config::ExperimentConfig;
use crate::svg::{grouped_bars, BarPanel};

/// One line of `summary.csv`; `subject` is `average` for cross-subject means.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub subject: String,
    pub model: String,
    pub direction: Direction,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub output: PathBuf,
    pub rows: Vec<SummaryRow>,
}

impl RunReport {
    pub fn accuracy(&self, subject: &str, model: &str, direction: Direction) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.subject == subject && r.model == model && r.direction == direction)
            .map(|r| r.accuracy)
    }
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("subject,model,direction,accuracy\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.subject, r.model, r.direction, r.accuracy);
    }
    out
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn load_models(cfg: &ExperimentConfig) -> Result<Vec<EmbeddingTable>> {
    let mut tables = Vec::new();
    for spec in &cfg.embeddings {
        info!("loading embeddings '{}' from {}", spec.name, spec.path.display());
        let table = EmbeddingTable::load(&spec.path, spec.format, &spec.name)?;
        tables.push(table);
    }
    let mut models = tables.clone();
    for c in &cfg.combinations {
        let find = |name: &str| tables.iter().find(|t| t.model_name() == name).expect("validated");
        let combined = combine_tables(find(&c.a), find(&c.b), c.method)?.with_model_name(c.model_name());
        models.push(combined);
    }
    Ok(models)
}

/// Runs a validated configuration and writes all artifacts into
/// `cfg.output`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let vocab = StimulusVocabulary::load(&cfg.vocabulary)?;
    let words: Vec<usize> = match &cfg.subset {
        Some(name) => vocab.subset(name)?.to_vec(),
        None => vocab.all_ids(),
    };
    let models = load_models(cfg)?;
    let mut subjects = Vec::new();
    for path in &cfg.subjects {
        info!("loading subject {}", path.display());
        subjects.push(SubjectDataset::load(path, &vocab)?);
    }
    let ids: BTreeSet<&str> = subjects.iter().map(|s| s.subject_id()).collect();
    if ids.len() != subjects.len() {
        bail!("subject ids are not unique");
    }
    fs::create_dir_all(&cfg.output)
        .with_context(|| format!("cannot create {}", cfg.output.display()))?;

    let regressor = cfg.effective_regressor();
    let mut rows = Vec::new();
    let mut matrices: Vec<(String, Direction, MismatchMatrix)> = Vec::new();
    for ds in &subjects {
        for table in &models {
            for &direction in &cfg.directions {
                let eval = EvalConfig {
                    regressor: regressor.clone(),
                    selection: cfg.voxel_selection,
                    retain_predictions: cfg.voxel_analysis && direction == Direction::WordToBrain,
                    workers: cfg.workers,
                };
                info!("{} {} {}: starting", ds.subject_id(), table.model_name(), direction);
                let result = run_leave_two_out(ds, &vocab, &words, table, direction, eval)
                    .with_context(|| format!("{} {} {}", ds.subject_id(), table.model_name(), direction))?;
                info!(
                    "{} {} {}: accuracy {:.4} ({}/{})",
                    ds.subject_id(),
                    table.model_name(),
                    direction,
                    result.accuracy,
                    result.correct_count(),
                    result.folds.len()
                );
                result.write_csv(cfg.output.join(result.file_name()))?;
                let m = mismatch_matrix(&result);
                m.write_csv(cfg.output.join(format!(
                    "mismatch_{}_{}_{}.csv",
                    ds.subject_id(),
                    table.model_name(),
                    direction
                )))?;
                if result.config.retain_predictions {
                    voxel_predictability(&result)?.write_csv(cfg.output.join(format!(
                        "voxels_{}_{}.csv",
                        ds.subject_id(),
                        table.model_name()
                    )))?;
                }
                rows.push(SummaryRow {
                    subject: ds.subject_id().to_string(),
                    model: table.model_name().to_string(),
                    direction,
                    accuracy: result.accuracy,
                });
                matrices.push((table.model_name().to_string(), direction, m));
            }
        }
    }

    let mut averages = Vec::new();
    for table in &models {
        for &direction in &cfg.directions {
            let model = table.model_name();
            let accs: Vec<f64> = rows
                .iter()
                .filter(|r| r.model == model && r.direction == direction)
                .map(|r| r.accuracy)
                .collect();
            averages.push(SummaryRow {
                subject: "average".into(),
                model: model.to_string(),
                direction,
                accuracy: accs.iter().sum::<f64>() / accs.len() as f64,
            });
            if subjects.len() > 1 {
                let ms: Vec<MismatchMatrix> = matrices
                    .iter()
                    .filter(|(m, d, _)| m == model && *d == direction)
                    .map(|(_, _, m)| m.clone())
                    .collect();
                average_mismatch(&ms)?
                    .write_csv(cfg.output.join(format!("mismatch_average_{model}_{direction}.csv")))?;
            }
        }
    }
    rows.extend(averages);

    write(&cfg.output.join("summary.csv"), &summary_csv(&rows))?;
    write(&cfg.output.join("summary.svg"), &summary_svg(cfg, &subjects, &models, &rows))?;
    info!("wrote {}", cfg.output.display());
    Ok(RunReport {
        output: cfg.output.clone(),
        rows,
    })
}

fn summary_svg(
    cfg: &ExperimentConfig,
    subjects: &[SubjectDataset],
    models: &[EmbeddingTable],
    rows: &[SummaryRow],
) -> String {
    let series: Vec<String> = models.iter().map(|t| t.model_name().to_string()).collect();
    let mut groups: Vec<String> = subjects.iter().map(|s| s.subject_id().to_string()).collect();
    groups.push("average".into());
    let panels: Vec<BarPanel> = cfg
        .directions
        .iter()
        .map(|&direction| BarPanel {
            title: format!("{direction} accuracy (chance 0.5)"),
            values: groups
                .iter()
                .map(|g| {
                    series
                        .iter()
                        .map(|m| {
                            rows.iter()
                                .find(|r| &r.subject == g && &r.model == m && r.direction == direction)
                                .map_or(0.0, |r| r.accuracy)
                        })
                        .collect()
                })
                .collect(),
            groups: groups.clone(),
        })
        .collect();
    grouped_bars(&series, &panels)
}
