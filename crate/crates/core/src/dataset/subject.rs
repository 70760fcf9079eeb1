use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1};

use super::StimulusVocabulary;
use crate::{Error, Result};

const MAGIC: &str = "#neurodecode-subject v1";

/// All trials recorded for one participant.
///
/// Rows of `trials` are trials, columns are voxels. Each word that is present
/// appears exactly once per presentation index `0..presentations`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectDataset {
    subject_id: String,
    trials: Array2<f64>,
    trial_word: Vec<usize>,
    trial_presentation: Vec<usize>,
    voxel_coords: Option<Vec<[i32; 3]>>,
    presentations: usize,
    rows_by_word: BTreeMap<usize, Vec<usize>>,
}

impl SubjectDataset {
    pub fn new(
        subject_id: impl Into<String>,
        trials: Array2<f64>,
        trial_word: Vec<usize>,
        trial_presentation: Vec<usize>,
        voxel_coords: Option<Vec<[i32; 3]>>,
    ) -> Result<Self> {
        let (t, v) = trials.dim();
        if v == 0 {
            return Err(Error::argument("dataset has no voxels"));
        }
        if t == 0 {
            return Err(Error::argument("dataset has no trials"));
        }
        if trial_word.len() != t || trial_presentation.len() != t {
            return Err(Error::argument(format!(
                "{} trials but {} word labels and {} presentation labels",
                t,
                trial_word.len(),
                trial_presentation.len()
            )));
        }
        if let Some((pos, _)) = trials.iter().enumerate().find(|(_, x)| !x.is_finite()) {
            return Err(Error::argument(format!(
                "non-finite activation at trial {}, voxel {}",
                pos / v,
                pos % v
            )));
        }
        if let Some(c) = &voxel_coords {
            if c.len() != v {
                return Err(Error::argument(format!(
                    "{} voxel coordinates for {} voxels",
                    c.len(),
                    v
                )));
            }
        }

        let mut by_word: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
        for (row, (&w, &p)) in trial_word.iter().zip(&trial_presentation).enumerate() {
            if by_word.entry(w).or_default().insert(p, row).is_some() {
                return Err(Error::argument(format!(
                    "word {w} presentation {p} appears more than once"
                )));
            }
        }
        let presentations = by_word.values().next().map_or(0, BTreeMap::len);
        for (w, pres) in &by_word {
            if pres.len() != presentations {
                return Err(Error::argument(format!(
                    "word {w} has {} presentations, expected {presentations}",
                    pres.len()
                )));
            }
            if let Some((&p, _)) = pres.iter().find(|(&p, _)| p >= presentations) {
                return Err(Error::argument(format!(
                    "word {w} has presentation index {p} but only {presentations} presentations"
                )));
            }
        }
        let rows_by_word = by_word
            .into_iter()
            .map(|(w, pres)| (w, pres.into_values().collect()))
            .collect();

        Ok(SubjectDataset {
            subject_id: subject_id.into(),
            trials,
            trial_word,
            trial_presentation,
            voxel_coords,
            presentations,
            rows_by_word,
        })
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn trials(&self) -> &Array2<f64> {
        &self.trials
    }

    pub fn n_trials(&self) -> usize {
        self.trials.nrows()
    }

    pub fn n_voxels(&self) -> usize {
        self.trials.ncols()
    }

    pub fn presentations(&self) -> usize {
        self.presentations
    }

    pub fn trial_word(&self) -> &[usize] {
        &self.trial_word
    }

    pub fn trial_presentation(&self) -> &[usize] {
        &self.trial_presentation
    }

    pub fn voxel_coords(&self) -> Option<&[[i32; 3]]> {
        self.voxel_coords.as_deref()
    }

    /// Word ids with at least one trial, ascending.
    pub fn words_present(&self) -> Vec<usize> {
        self.rows_by_word.keys().copied().collect()
    }

    pub fn contains_word(&self, word: usize) -> bool {
        self.rows_by_word.contains_key(&word)
    }

    /// Trial rows for `word`, indexed by presentation.
    pub fn trial_rows(&self, word: usize) -> Option<&[usize]> {
        self.rows_by_word.get(&word).map(Vec::as_slice)
    }

    pub(crate) fn trial(&self, word: usize, presentation: usize) -> ArrayView1<'_, f64> {
        self.trials.row(self.rows_by_word[&word][presentation])
    }

    /// Reads the canonical subject TSV format.
    pub fn load(path: impl AsRef<Path>, vocab: &StimulusVocabulary) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, vocab, base)
    }

    /// Parses subject TSV text. A `coords=` path is resolved against `base`.
    pub fn parse(text: &str, vocab: &StimulusVocabulary, base: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l.trim_end() == MAGIC => {}
            _ => return Err(Error::format(1, format!("expected '{MAGIC}'"))),
        }
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::format(2, "missing subject header line"))?;
        let mut subject = None;
        let mut voxels = None;
        let mut presentations = None;
        for field in header.split('\t') {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| Error::format(2, format!("expected key=value, found '{field}'")))?;
            let parse_count = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| Error::format(2, format!("invalid {k} value '{v}'")))
            };
            match k {
                "subject" => subject = Some(v.to_string()),
                "voxels" => voxels = Some(parse_count(v)?),
                "presentations" => presentations = Some(parse_count(v)?),
                _ => return Err(Error::format(2, format!("unknown header key '{k}'"))),
            }
        }
        let subject = subject.ok_or_else(|| Error::format(2, "missing subject="))?;
        let voxels = voxels.ok_or_else(|| Error::format(2, "missing voxels="))?;
        let presentations = presentations.ok_or_else(|| Error::format(2, "missing presentations="))?;
        if voxels == 0 {
            return Err(Error::format(2, "voxels must be positive"));
        }

        let mut coords = None;
        let mut values = Vec::new();
        let mut trial_word = Vec::new();
        let mut trial_presentation = Vec::new();
        let mut seen: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (line, row) in lines {
            if row.is_empty() {
                continue;
            }
            if let Some(rel) = row.strip_prefix("coords=") {
                if !trial_word.is_empty() || coords.is_some() {
                    return Err(Error::format(line, "coords= must directly follow the header"));
                }
                coords = Some(load_coords(&base.join(rel), voxels)?);
                continue;
            }
            let mut fields = row.split('\t');
            let word = fields.next().unwrap_or_default();
            let word_id = vocab.index_of(word).ok_or_else(|| {
                Error::Vocabulary(format!("line {line}: word '{word}' is not in the vocabulary"))
            })?;
            let pres: usize = fields
                .next()
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| Error::format(line, "missing or invalid presentation index"))?;
            if pres >= presentations {
                return Err(Error::format(
                    line,
                    format!("presentation {pres} out of range for presentations={presentations}"),
                ));
            }
            if let Some(prev) = seen.insert((word_id, pres), line) {
                return Err(Error::format(
                    line,
                    format!("word '{word}' presentation {pres} already given at line {prev}"),
                ));
            }
            let start = values.len();
            for f in fields {
                let x: f64 = f
                    .parse()
                    .map_err(|_| Error::format(line, format!("invalid value '{f}'")))?;
                if !x.is_finite() {
                    return Err(Error::format(line, format!("non-finite value '{f}'")));
                }
                values.push(x);
            }
            if values.len() - start != voxels {
                return Err(Error::format(
                    line,
                    format!("expected {voxels} voxel values, found {}", values.len() - start),
                ));
            }
            trial_word.push(word_id);
            trial_presentation.push(pres);
        }

        let t = trial_word.len();
        let trials = Array2::from_shape_vec((t, voxels), values)
            .map_err(|e| Error::format_any(e.to_string()))?;
        let ds = SubjectDataset::new(subject, trials, trial_word, trial_presentation, coords)
            .map_err(|e| match e {
                Error::Argument(m) => Error::format_any(m),
                other => other,
            })?;
        if ds.presentations != presentations {
            return Err(Error::format_any(format!(
                "header declares {presentations} presentations, words have {}",
                ds.presentations
            )));
        }
        Ok(ds)
    }

    /// Writes the canonical subject TSV. When coordinates are present they
    /// go to a sibling file named `<stem>.coords.tsv`.
    pub fn write(&self, path: impl AsRef<Path>, vocab: &StimulusVocabulary) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        let _ = writeln!(
            out,
            "subject={}\tvoxels={}\tpresentations={}",
            self.subject_id,
            self.n_voxels(),
            self.presentations
        );
        if let Some(coords) = &self.voxel_coords {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("subject");
            let name = format!("{stem}.coords.tsv");
            let coords_path: PathBuf = path.with_file_name(&name);
            let mut c = String::new();
            for [x, y, z] in coords {
                let _ = writeln!(c, "{x}\t{y}\t{z}");
            }
            fs::write(&coords_path, c).map_err(|e| Error::io(&coords_path, e))?;
            let _ = writeln!(out, "coords={name}");
        }
        for (row, values) in self.trials.rows().into_iter().enumerate() {
            out.push_str(vocab.word(self.trial_word[row]));
            let _ = write!(out, "\t{}", self.trial_presentation[row]);
            for x in values {
                let _ = write!(out, "\t{x}");
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn load_coords(path: &Path, voxels: usize) -> Result<Vec<[i32; 3]>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut coords = Vec::with_capacity(voxels);
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<i32> = line
            .split_whitespace()
            .map(|f| f.parse::<i32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format(i + 1, format!("{}: invalid coordinate row", path.display())))?;
        if parts.len() != 3 {
            return Err(Error::format(
                i + 1,
                format!("{}: expected 3 coordinates", path.display()),
            ));
        }
        coords.push([parts[0], parts[1], parts[2]]);
    }
    if coords.len() != voxels {
        return Err(Error::format_any(format!(
            "{}: {} coordinate rows for {voxels} voxels",
            path.display(),
            coords.len()
        )));
    }
    Ok(coords)
}

/// One response row per word, the mean over that word's presentations.
#[derive(Debug, Clone, PartialEq)]
pub struct WordResponseMatrix {
    pub rows: Array2<f64>,
    pub word_order: Vec<usize>,
}

pub fn average_presentations(ds: &SubjectDataset, words: &[usize]) -> Result<WordResponseMatrix> {
    let mut rows = Array2::zeros((words.len(), ds.n_voxels()));
    for (i, &w) in words.iter().enumerate() {
        let trial_rows = ds
            .trial_rows(w)
            .ok_or_else(|| Error::Vocabulary(format!("word id {w} has no trials")))?;
        let mut acc = rows.row_mut(i);
        for &r in trial_rows {
            acc += &ds.trials.row(r);
        }
        acc /= trial_rows.len() as f64;
    }
    Ok(WordResponseMatrix {
        rows,
        word_order: words.to_vec(),
    })
}
