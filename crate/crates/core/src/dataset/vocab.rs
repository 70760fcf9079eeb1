use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::{Error, Result};

/// Ordered stimulus words with one category label each and named subsets.
#[derive(Debug, Clone, PartialEq)]
pub struct StimulusVocabulary {
    words: Vec<String>,
    categories: Vec<String>,
    subsets: BTreeMap<String, Vec<usize>>,
    index: HashMap<String, usize>,
}

fn check_word(word: &str) -> Result<()> {
    if word.is_empty() {
        return Err(Error::Vocabulary("empty word identifier".into()));
    }
    if word.chars().any(|c| c.is_uppercase() || c.is_whitespace()) {
        return Err(Error::Vocabulary(format!(
            "word '{word}' must be lowercase without whitespace"
        )));
    }
    Ok(())
}

impl StimulusVocabulary {
    /// Builds a vocabulary from `(word, category)` entries in order plus
    /// named subsets given by member words.
    pub fn new(
        entries: Vec<(String, String)>,
        subsets: BTreeMap<String, Vec<String>>,
    ) -> Result<Self> {
        let mut words = Vec::with_capacity(entries.len());
        let mut categories = Vec::with_capacity(entries.len());
        let mut index = HashMap::with_capacity(entries.len());
        for (word, category) in entries {
            check_word(&word)?;
            if category.trim().is_empty() {
                return Err(Error::Vocabulary(format!("word '{word}' has no category")));
            }
            if index.insert(word.clone(), words.len()).is_some() {
                return Err(Error::Vocabulary(format!("duplicate word '{word}'")));
            }
            words.push(word);
            categories.push(category);
        }

        let mut resolved = BTreeMap::new();
        for (name, members) in subsets {
            if name.is_empty() {
                return Err(Error::Vocabulary("empty subset name".into()));
            }
            let mut ids = Vec::with_capacity(members.len());
            for m in &members {
                let id = *index.get(m).ok_or_else(|| {
                    Error::Vocabulary(format!("subset '{name}' names unknown word '{m}'"))
                })?;
                if ids.contains(&id) {
                    return Err(Error::Vocabulary(format!(
                        "subset '{name}' lists '{m}' twice"
                    )));
                }
                ids.push(id);
            }
            resolved.insert(name, ids);
        }

        Ok(StimulusVocabulary {
            words,
            categories,
            subsets: resolved,
            index,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    /// Parses the `word,category,subsets` CSV format. `subsets` is a
    /// `;`-separated list of subset names the word belongs to.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);

        let headers = rdr
            .headers()
            .map_err(|e| Error::format(1, e.to_string()))?
            .clone();
        let expected = ["word", "category", "subsets"];
        if headers.len() < 2
            || headers.iter().zip(expected.iter()).any(|(h, e)| h != *e)
        {
            return Err(Error::format(
                1,
                format!("expected header 'word,category,subsets', found '{}'", headers.iter().collect::<Vec<_>>().join(",")),
            ));
        }

        let mut entries = Vec::new();
        let mut subsets: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut seen = HashMap::new();
        for (i, record) in rdr.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| Error::format(line, e.to_string()))?;
            if record.iter().all(|f| f.is_empty()) {
                continue;
            }
            if record.len() < 2 || record.len() > 3 {
                return Err(Error::format(
                    line,
                    format!("expected 2 or 3 fields, found {}", record.len()),
                ));
            }
            let word = record[0].to_string();
            if let Some(prev) = seen.insert(word.clone(), line) {
                return Err(Error::format(
                    line,
                    format!("duplicate word '{word}' (first at line {prev})"),
                ));
            }
            check_word(&word).map_err(|e| Error::format(line, e.to_string()))?;
            let category = record[1].to_string();
            if category.is_empty() {
                return Err(Error::format(line, format!("word '{word}' has no category")));
            }
            if let Some(list) = record.get(2) {
                for name in list.split(';').map(str::trim).filter(|s| !s.is_empty()) {
                    subsets.entry(name.to_string()).or_default().push(word.clone());
                }
            }
            entries.push((word, category));
        }
        if entries.is_empty() {
            return Err(Error::format_any("word list has no entries"));
        }
        Self::new(entries, subsets).map_err(|e| match e {
            Error::Vocabulary(m) => Error::format_any(m),
            other => other,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("word,category,subsets\n");
        for (i, word) in self.words.iter().enumerate() {
            let member_of: Vec<&str> = self
                .subsets
                .iter()
                .filter(|(_, ids)| ids.contains(&i))
                .map(|(n, _)| n.as_str())
                .collect();
            out.push_str(&format!("{},{},{}\n", word, self.categories[i], member_of.join(";")));
        }
        File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
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

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn category(&self, id: usize) -> &str {
        &self.categories[id]
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn subset_names(&self) -> impl Iterator<Item = &str> {
        self.subsets.keys().map(String::as_str)
    }

    /// Word ids of a named subset, in file order.
    pub fn subset(&self, name: &str) -> Result<&[usize]> {
        self.subsets
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Vocabulary(format!("unknown subset '{name}'")))
    }

    /// All word ids in vocabulary order.
    pub fn all_ids(&self) -> Vec<usize> {
        (0..self.words.len()).collect()
    }

    pub fn resolve<S: AsRef<str>>(&self, words: &[S]) -> Result<Vec<usize>> {
        words
            .iter()
            .map(|w| {
                self.index_of(w.as_ref())
                    .ok_or_else(|| Error::Vocabulary(format!("unknown word '{}'", w.as_ref())))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rows_and_subsets() {
        let text = "word,category,subsets\nbear,animal,exp;small\ncat,animal,exp\nfoot,body part,\n";
        let v = StimulusVocabulary::from_reader(text.as_bytes()).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.words(), ["bear", "cat", "foot"]);
        assert_eq!(v.category(2), "body part");
        assert_eq!(v.subset("exp").unwrap(), &[0, 1]);
        assert_eq!(v.subset("small").unwrap(), &[0]);
        assert!(v.subset("nope").is_err());
    }

    #[test]
    fn single_row_without_subsets_column() {
        let v = StimulusVocabulary::from_reader("word,category,subsets\nbear,animal\n".as_bytes())
            .unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v.category(0), "animal");
    }

    #[test]
    fn sixty_words_twelve_categories() {
        let mut text = String::from("word,category,subsets\n");
        for i in 0..60 {
            text.push_str(&format!("w{i},cat{},\n", i % 12));
        }
        let v = StimulusVocabulary::from_reader(text.as_bytes()).unwrap();
        assert_eq!(v.len(), 60);
        let mut cats: Vec<&str> = (0..60).map(|i| v.category(i)).collect();
        cats.sort();
        cats.dedup();
        assert_eq!(cats.len(), 12);
    }

    #[test]
    fn duplicate_word_is_format_error() {
        let err = StimulusVocabulary::from_reader(
            "word,category,subsets\nbear,animal,\nbear,animal,\n".as_bytes(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Format { line: Some(3), .. }), "{err}");
    }

    #[test]
    fn rejects_bad_header_and_uppercase() {
        assert!(StimulusVocabulary::from_reader("noun,cat\nbear,animal\n".as_bytes()).is_err());
        assert!(StimulusVocabulary::from_reader(
            "word,category,subsets\nBear,animal,\n".as_bytes()
        )
        .is_err());
    }

    #[test]
    fn unknown_subset_member_rejected() {
        let mut subsets = BTreeMap::new();
        subsets.insert("exp".to_string(), vec!["dog".to_string()]);
        let err = StimulusVocabulary::new(vec![("bear".into(), "animal".into())], subsets)
            .unwrap_err();
        assert!(matches!(err, Error::Vocabulary(_)));
    }

    #[test]
    fn write_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("words.csv");
        let text = "word,category,subsets\nbear,animal,exp\ncat,animal,\nfoot,body part,exp;x\n";
        let v = StimulusVocabulary::from_reader(text.as_bytes()).unwrap();
        v.write(&p).unwrap();
        assert_eq!(StimulusVocabulary::load(&p).unwrap(), v);
    }
}
