//! Pretrained word-embedding tables in word2vec/GloVe text formats.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::{s, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::dataset::Standardizer;
use crate::{Error, Result};

/// On-disk layout of an embedding text file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VecFormat {
    /// word2vec text: a `<count> <dim>` line, then one word per line.
    HeaderedVec,
    /// GloVe text: one word per line, dimension taken from the first line.
    HeaderlessVec,
}

impl std::str::FromStr for VecFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "headered-vec" => Ok(VecFormat::HeaderedVec),
            "headerless-vec" => Ok(VecFormat::HeaderlessVec),
            _ => Err(Error::argument(format!("unknown embedding format '{s}'"))),
        }
    }
}

/// Word → vector mapping with a fixed dimensionality.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    model_name: String,
    words: Vec<String>,
    vectors: Array2<f64>,
    index: HashMap<String, usize>,
    duplicates: usize,
}

impl EmbeddingTable {
    pub fn new(model_name: impl Into<String>, words: Vec<String>, vectors: Array2<f64>) -> Result<Self> {
        if words.len() != vectors.nrows() {
            return Err(Error::argument(format!(
                "{} words for {} vectors",
                words.len(),
                vectors.nrows()
            )));
        }
        if vectors.ncols() == 0 {
            return Err(Error::argument("embedding dimension must be positive"));
        }
        if vectors.iter().any(|x| !x.is_finite()) {
            return Err(Error::argument("embedding vectors must be finite"));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::argument(format!("duplicate word '{w}'")));
            }
        }
        Ok(EmbeddingTable {
            model_name: model_name.into(),
            words,
            vectors,
            index,
            duplicates: 0,
        })
    }

    pub fn load(path: impl AsRef<Path>, format: VecFormat, model_name: &str) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), format, model_name)
    }

    /// Parses a text-format table. A word seen twice keeps its last vector.
    pub fn read<R: BufRead>(reader: R, format: VecFormat, model_name: &str) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let mut declared = None;
        let mut dim = None;
        if format == VecFormat::HeaderedVec {
            let (_, header) = lines
                .next()
                .ok_or_else(|| Error::format_any("empty embedding file"))?;
            let header = header.map_err(|e| Error::format(1, e.to_string()))?;
            let parts: Vec<usize> = header
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::format(1, format!("invalid header '{header}'")))?;
            if parts.len() != 2 || parts[1] == 0 {
                return Err(Error::format(1, format!("expected '<count> <dim>', found '{header}'")));
            }
            declared = Some(parts[0]);
            dim = Some(parts[1]);
        }

        let mut words: Vec<String> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut rows = 0usize;
        let mut duplicates = 0usize;
        for (i, line) in lines {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::format(line_no, e.to_string()))?;
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else {
                continue;
            };
            let vector: Vec<f64> = fields
                .map(|f| {
                    f.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| Error::format(line_no, format!("invalid component '{f}'")))
                })
                .collect::<Result<_>>()?;
            let d = *dim.get_or_insert(vector.len());
            if d == 0 {
                return Err(Error::format(line_no, "word has no vector components"));
            }
            if vector.len() != d {
                return Err(Error::format(
                    line_no,
                    format!("vector for '{word}' has {} components, expected {d}", vector.len()),
                ));
            }
            rows += 1;
            match index.get(word) {
                Some(&slot) => {
                    duplicates += 1;
                    values[slot * d..(slot + 1) * d].copy_from_slice(&vector);
                }
                None => {
                    index.insert(word.to_string(), words.len());
                    words.push(word.to_string());
                    values.extend_from_slice(&vector);
                }
            }
        }

        if words.is_empty() {
            return Err(Error::format_any("embedding file has no vectors"));
        }
        if let Some(count) = declared {
            if count != rows {
                return Err(Error::format_any(format!(
                    "header declares {count} vectors, file has {rows}"
                )));
            }
        }
        if duplicates > 0 {
            log::warn!("{model_name}: {duplicates} duplicate words, keeping the last vector of each");
        }
        let dim = dim.expect("set by first row");
        let vectors = Array2::from_shape_vec((words.len(), dim), values)
            .map_err(|e| Error::format_any(e.to_string()))?;
        Ok(EmbeddingTable {
            model_name: model_name.to_string(),
            words,
            vectors,
            index,
            duplicates,
        })
    }

    /// Writes the table in `format`; values use shortest round-trip decimals.
    pub fn write(&self, path: impl AsRef<Path>, format: VecFormat) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        if format == VecFormat::HeaderedVec {
            let _ = writeln!(out, "{} {}", self.len(), self.dim());
        }
        for (w, row) in self.words.iter().zip(self.vectors.rows()) {
            out.push_str(w);
            for x in row {
                let _ = write!(out, " {x}");
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn with_model_name(mut self, name: impl Into<String>) -> Self {
        self.model_name = name.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    /// Number of rows dropped because a later row repeated the word.
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn get(&self, word: &str) -> Option<ArrayView1<'_, f64>> {
        self.index.get(word).map(|&i| self.vectors.row(i))
    }

    /// Keeps the columns `range` under a new model name.
    pub fn slice_dims(&self, range: std::ops::Range<usize>, model_name: &str) -> Result<Self> {
        if range.start >= range.end || range.end > self.dim() {
            return Err(Error::argument(format!(
                "dimension range {range:?} invalid for dim {}",
                self.dim()
            )));
        }
        EmbeddingTable::new(
            model_name,
            self.words.clone(),
            self.vectors.slice(s![.., range]).to_owned(),
        )
    }
}

/// Table rows gathered for an ordered word list.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub rows: Array2<f64>,
    pub words: Vec<String>,
    pub source_model: String,
}

/// Looks up every word. Any missing word is an error that lists all misses.
pub fn lookup_matrix<S: AsRef<str>>(table: &EmbeddingTable, words: &[S]) -> Result<EmbeddingMatrix> {
    let missing: Vec<String> = words
        .iter()
        .map(AsRef::as_ref)
        .filter(|w| !table.contains(w))
        .map(str::to_string)
        .collect();
    if !missing.is_empty() {
        return Err(Error::OutOfVocabulary {
            model: table.model_name.clone(),
            words: missing,
        });
    }
    let mut rows = Array2::zeros((words.len(), table.dim()));
    for (i, w) in words.iter().enumerate() {
        rows.row_mut(i).assign(&table.get(w.as_ref()).expect("checked"));
    }
    Ok(EmbeddingMatrix {
        rows,
        words: words.iter().map(|w| w.as_ref().to_string()).collect(),
        source_model: table.model_name.clone(),
    })
}

/// How two embedding spaces are merged into one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Combination {
    Concat,
    /// Scales the first block by `alpha` and the second by `1 - alpha`.
    WeightedConcat(f64),
}

/// Concatenates two tables over their shared vocabulary (in `a`'s order)
/// after z-scoring each block's columns over that vocabulary.
pub fn combine_tables(a: &EmbeddingTable, b: &EmbeddingTable, method: Combination) -> Result<EmbeddingTable> {
    let (wa, wb, label) = match method {
        Combination::Concat => (1.0, 1.0, format!("{}+{}", a.model_name, b.model_name)),
        Combination::WeightedConcat(alpha) => {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(Error::argument(format!("weight {alpha} outside [0, 1]")));
            }
            (
                alpha,
                1.0 - alpha,
                format!("{}+{}@{alpha}", a.model_name, b.model_name),
            )
        }
    };
    let shared: Vec<&String> = a.words.iter().filter(|w| b.contains(w)).collect();
    if shared.is_empty() {
        return Err(Error::argument(format!(
            "'{}' and '{}' share no words",
            a.model_name, b.model_name
        )));
    }
    let ma = lookup_matrix(a, &shared)?.rows;
    let mb = lookup_matrix(b, &shared)?.rows;
    let za = zscore(&ma)? * wa;
    let zb = zscore(&mb)? * wb;
    let mut rows = Array2::zeros((shared.len(), a.dim() + b.dim()));
    rows.slice_mut(s![.., ..a.dim()]).assign(&za);
    rows.slice_mut(s![.., a.dim()..]).assign(&zb);
    EmbeddingTable::new(label, shared.into_iter().cloned().collect(), rows)
}

fn zscore(m: &Array2<f64>) -> Result<Array2<f64>> {
    if m.nrows() < 2 {
        // a single shared word has no spread to normalise
        return Ok(Array2::zeros(m.dim()));
    }
    Standardizer::fit(m.view())?.apply(m.view())
}
