//! Dataset ingestion: tokenization, label schemes, train/dev/test splits and
//! vocabularies.
//!
//! Datasets live in a directory holding `train.tsv`, `dev.tsv` and
//! `test.tsv`. Each line is `label<TAB>text` with a decimal label index, UTF-8
//! text and no header. Labels are ordered from most negative to most positive
//! so that the binary collapse of a five-way scheme does not depend on the
//! label names.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercases `text`, splits on whitespace and detaches every punctuation
/// character as its own token.
///
/// ```
/// use sentibench::data::tokenize;
/// assert_eq!(tokenize("Good movie!"), vec!["good", "movie", "!"]);
/// assert_eq!(tokenize("A  B"), vec!["a", "b"]);
/// assert!(tokenize("").is_empty());
/// ```
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for ch in chunk.chars() {
            if ch.is_alphanumeric() || ch == '_' {
                word.extend(ch.to_lowercase());
            } else {
                if !word.is_empty() {
                    tokens.push(std::mem::take(&mut word));
                }
                tokens.push(ch.to_lowercase().collect());
            }
        }
        if !word.is_empty() {
            tokens.push(word);
        }
    }
    tokens
}

/// Ordered label names, most negative first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelScheme {
    names: Vec<String>,
}

impl LabelScheme {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if !(2..=5).contains(&names.len()) {
            return Err(Error::invalid(format!(
                "label schemes have 2 to 5 labels, got {}",
                names.len()
            )));
        }
        Ok(LabelScheme { names })
    }

    /// Standard scheme with `num_labels` classes.
    pub fn with_labels(num_labels: usize) -> Result<Self> {
        let names: &[&str] = match num_labels {
            2 => &["negative", "positive"],
            3 => &["negative", "neutral", "positive"],
            4 => &["strong negative", "negative", "positive", "strong positive"],
            5 => &[
                "strong negative",
                "negative",
                "neutral",
                "positive",
                "strong positive",
            ],
            n => {
                return Err(Error::invalid(format!(
                    "label schemes have 2 to 5 labels, got {n}"
                )))
            }
        };
        Ok(LabelScheme {
            names: names.iter().map(|s| s.to_string()).collect(),
        })
    }

    pub fn binary() -> Self {
        Self::with_labels(2).expect("two labels")
    }

    pub fn num_labels(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn contains(&self, label: usize) -> bool {
        label < self.names.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub text: String,
    pub tokens: Vec<String>,
    pub label: usize,
}

impl LabeledExample {
    /// Tokenizes `text`; empty token sequences are rejected.
    pub fn new(text: impl Into<String>, label: usize) -> Result<Self> {
        let text = text.into();
        let tokens = tokenize(&text);
        if tokens.is_empty() {
            return Err(Error::invalid("example has no tokens"));
        }
        Ok(LabeledExample {
            text,
            tokens,
            label,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Partition {
    Train,
    Dev,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Dev, Partition::Test];

    pub fn file_name(self) -> &'static str {
        match self {
            Partition::Train => "train.tsv",
            Partition::Dev => "dev.tsv",
            Partition::Test => "test.tsv",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Partition::Train => "train",
            Partition::Dev => "dev",
            Partition::Test => "test",
        };
        f.write_str(name)
    }
}

/// A named dataset with its three partitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub name: String,
    pub scheme: LabelScheme,
    pub train: Vec<LabeledExample>,
    pub dev: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
}

impl DatasetSplit {
    /// Checks that every partition is non-empty and every label fits the scheme.
    pub fn new(
        name: impl Into<String>,
        scheme: LabelScheme,
        train: Vec<LabeledExample>,
        dev: Vec<LabeledExample>,
        test: Vec<LabeledExample>,
    ) -> Result<Self> {
        let split = DatasetSplit {
            name: name.into(),
            scheme,
            train,
            dev,
            test,
        };
        for part in Partition::ALL {
            let examples = split.partition(part);
            if examples.is_empty() {
                return Err(Error::invalid(format!(
                    "dataset {}: {part} partition is empty",
                    split.name
                )));
            }
            if let Some(bad) = examples.iter().find(|e| !split.scheme.contains(e.label)) {
                return Err(Error::invalid(format!(
                    "dataset {}: label {} outside a {}-label scheme",
                    split.name,
                    bad.label,
                    split.scheme.num_labels()
                )));
            }
        }
        Ok(split)
    }

    pub fn partition(&self, part: Partition) -> &[LabeledExample] {
        match part {
            Partition::Train => &self.train,
            Partition::Dev => &self.dev,
            Partition::Test => &self.test,
        }
    }

    /// Raw texts of all three partitions.
    pub fn texts(&self) -> impl Iterator<Item = &str> {
        Partition::ALL
            .into_iter()
            .flat_map(move |p| self.partition(p).iter().map(|e| e.text.as_str()))
    }
}

fn read_partition(path: &Path, scheme: &LabelScheme) -> Result<Vec<LabeledExample>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut examples = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        let (label, text) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, line_no, "expected `label<TAB>text`"))?;
        let label: usize = label
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("label {label:?} is not an integer")))?;
        if !scheme.contains(label) {
            return Err(Error::parse(
                path,
                line_no,
                format!("label {label} outside a {}-label scheme", scheme.num_labels()),
            ));
        }
        let example = LabeledExample::new(text, label)
            .map_err(|_| Error::parse(path, line_no, "text has no tokens"))?;
        examples.push(example);
    }
    Ok(examples)
}

/// Loads `train.tsv`, `dev.tsv` and `test.tsv` from `dir`. The dataset is
/// named after the directory.
pub fn load_dataset(dir: impl AsRef<Path>, scheme: LabelScheme) -> Result<DatasetSplit> {
    let dir = dir.as_ref();
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    let train = read_partition(&dir.join(Partition::Train.file_name()), &scheme)?;
    let dev = read_partition(&dir.join(Partition::Dev.file_name()), &scheme)?;
    let test = read_partition(&dir.join(Partition::Test.file_name()), &scheme)?;
    DatasetSplit::new(name, scheme, train, dev, test)
}

/// Infers a scheme from the largest label found in the directory's files.
pub fn infer_scheme(dir: impl AsRef<Path>) -> Result<LabelScheme> {
    let dir = dir.as_ref();
    let mut max_label = 0usize;
    for part in Partition::ALL {
        let path = dir.join(part.file_name());
        let content = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        for (idx, line) in content.lines().enumerate() {
            let label = line
                .split_once('\t')
                .and_then(|(l, _)| l.trim().parse::<usize>().ok())
                .ok_or_else(|| Error::parse(&path, idx + 1, "expected `label<TAB>text`"))?;
            max_label = max_label.max(label);
        }
    }
    LabelScheme::with_labels(max_label + 1)
}

/// Writes the split back out in the directory format read by [`load_dataset`].
pub fn write_dataset(split: &DatasetSplit, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for part in Partition::ALL {
        let path = dir.join(part.file_name());
        let mut out = Vec::new();
        for ex in split.partition(part) {
            let text = ex.text.replace(['\t', '\n', '\r'], " ");
            writeln!(out, "{}\t{}", ex.label, text).expect("write to Vec");
        }
        fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Collapses a five-label split to two labels: the two negative classes map
/// to 0, the two positive classes to 1, and neutral examples are dropped.
pub fn sst_to_binary(fine: &DatasetSplit) -> Result<DatasetSplit> {
    if fine.scheme.num_labels() != 5 {
        return Err(Error::invalid(format!(
            "binary collapse needs a 5-label scheme, got {}",
            fine.scheme.num_labels()
        )));
    }
    let collapse = |examples: &[LabeledExample]| -> Vec<LabeledExample> {
        examples
            .iter()
            .filter(|e| e.label != 2)
            .map(|e| LabeledExample {
                label: usize::from(e.label > 2),
                ..e.clone()
            })
            .collect()
    };
    DatasetSplit::new(
        format!("{}-binary", fine.name),
        LabelScheme::binary(),
        collapse(&fine.train),
        collapse(&fine.dev),
        collapse(&fine.test),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub num_labels: usize,
    /// Mean token count over training examples.
    pub avg_length: f64,
    /// Distinct training tokens.
    pub vocab_size: usize,
}

pub fn dataset_stats(split: &DatasetSplit) -> DatasetStats {
    let total: usize = split.train.iter().map(|e| e.tokens.len()).sum();
    let vocab: std::collections::HashSet<&str> = split
        .train
        .iter()
        .flat_map(|e| e.tokens.iter().map(String::as_str))
        .collect();
    DatasetStats {
        train: split.train.len(),
        dev: split.dev.len(),
        test: split.test.len(),
        num_labels: split.scheme.num_labels(),
        avg_length: if split.train.is_empty() {
            0.0
        } else {
            total as f64 / split.train.len() as f64
        },
        vocab_size: vocab.len(),
    }
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    words: Vec<String>,
    counts: Vec<u64>,
}

/// Bijective word ↔ index map with contiguous indices and per-word counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    words: Vec<String>,
    counts: Vec<u64>,
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = Error;

    fn try_from(repr: VocabularyRepr) -> Result<Self> {
        if repr.words.len() != repr.counts.len() {
            return Err(Error::invalid("vocabulary words and counts differ in length"));
        }
        Vocabulary::from_entries(repr.words.into_iter().zip(repr.counts))
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            words: v.words,
            counts: v.counts,
        }
    }
}

impl Vocabulary {
    /// Keeps the words occurring at least `min_count` times, ordered by
    /// descending count with ties broken lexicographically.
    pub fn build<I, S>(corpus: I, min_count: u64) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[String]>,
    {
        if min_count == 0 {
            return Err(Error::invalid("min_count must be at least 1"));
        }
        let mut counts: HashMap<&str, u64> = HashMap::new();
        // Tokens are borrowed from the caller's sentences; collect them first.
        let sentences: Vec<S> = corpus.into_iter().collect();
        for sentence in &sentences {
            for token in sentence.as_ref() {
                *counts.entry(token.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, u64)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count)
            .collect();
        if kept.is_empty() {
            return Err(Error::invalid(format!(
                "no word occurs at least {min_count} times"
            )));
        }
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Self::from_entries(kept.into_iter().map(|(w, c)| (w.to_string(), c)))
    }

    /// Vocabulary in the given order. Duplicate words are rejected.
    pub fn from_entries<I: IntoIterator<Item = (String, u64)>>(entries: I) -> Result<Self> {
        let mut vocab = Vocabulary {
            index: HashMap::new(),
            words: Vec::new(),
            counts: Vec::new(),
        };
        for (word, count) in entries {
            vocab.insert(word, count)?;
        }
        Ok(vocab)
    }

    /// Appends a word; returns its index.
    pub fn insert(&mut self, word: String, count: u64) -> Result<usize> {
        if self.index.contains_key(&word) {
            return Err(Error::invalid(format!("duplicate word {word:?}")));
        }
        let idx = self.words.len();
        self.index.insert(word.clone(), idx);
        self.words.push(word);
        self.counts.push(count);
        Ok(idx)
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn word(&self, idx: usize) -> &str {
        &self.words[idx]
    }

    pub fn count(&self, idx: usize) -> u64 {
        self.counts[idx]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(text: &str, label: usize) -> LabeledExample {
        LabeledExample::new(text, label).unwrap()
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn tokenize_rules() {
        assert_eq!(tokenize("Good movie!"), vec!["good", "movie", "!"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("A  B"), vec!["a", "b"]);
        assert_eq!(tokenize("love it :)"), vec!["love", "it", ":", ")"]);
        assert_eq!(tokenize("\tÉTÉ,\n"), vec!["été", ","]);
    }

    #[test]
    fn vocabulary_min_count() {
        let v = Vocabulary::build([toks("a a b")], 2).unwrap();
        assert_eq!(v.words(), ["a"]);
        let v = Vocabulary::build([toks("a b")], 1).unwrap();
        assert_eq!(v.words(), ["a", "b"]);
        assert!(Vocabulary::build([toks("a")], 2).is_err());
    }

    #[test]
    fn vocabulary_order_is_count_then_lexicographic() {
        let v = Vocabulary::build([toks("c b b a a z")], 1).unwrap();
        assert_eq!(v.words(), ["a", "b", "c", "z"]);
        assert_eq!(v.get("b"), Some(1));
        assert_eq!(v.count(0), 2);
    }

    #[test]
    fn vocabulary_serde_round_trip() {
        let v = Vocabulary::build([toks("x y y")], 1).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(v, back);
    }

    #[test]
    fn binary_collapse() {
        let fine = DatasetSplit::new(
            "sst",
            LabelScheme::with_labels(5).unwrap(),
            vec![ex("a", 0), ex("b", 1), ex("c", 2), ex("d", 3), ex("e", 4)],
            vec![ex("a", 2), ex("b", 4)],
            vec![ex("a", 0)],
        )
        .unwrap();
        let bin = sst_to_binary(&fine).unwrap();
        let labels: Vec<usize> = bin.train.iter().map(|e| e.label).collect();
        assert_eq!(labels, vec![0, 0, 1, 1]);
        assert_eq!(bin.dev.len(), 1);
        assert_eq!(bin.scheme.num_labels(), 2);
    }

    #[test]
    fn binary_collapse_without_neutral_keeps_sizes() {
        let fine = DatasetSplit::new(
            "sst",
            LabelScheme::with_labels(5).unwrap(),
            vec![ex("a", 0), ex("b", 4)],
            vec![ex("a", 1)],
            vec![ex("a", 3)],
        )
        .unwrap();
        let bin = sst_to_binary(&fine).unwrap();
        assert_eq!((bin.train.len(), bin.dev.len(), bin.test.len()), (2, 1, 1));
    }

    #[test]
    fn binary_collapse_rejects_degenerate_input() {
        let all_neutral = DatasetSplit::new(
            "sst",
            LabelScheme::with_labels(5).unwrap(),
            vec![ex("a", 2)],
            vec![ex("a", 2)],
            vec![ex("a", 2)],
        )
        .unwrap();
        assert!(sst_to_binary(&all_neutral).is_err());
        let three = DatasetSplit::new(
            "x",
            LabelScheme::with_labels(3).unwrap(),
            vec![ex("a", 0)],
            vec![ex("a", 1)],
            vec![ex("a", 2)],
        )
        .unwrap();
        assert!(sst_to_binary(&three).is_err());
    }

    #[test]
    fn stats_on_tiny_splits() {
        let split = DatasetSplit::new(
            "t",
            LabelScheme::binary(),
            vec![ex("a b c d", 0)],
            vec![ex("x", 1)],
            vec![ex("y", 1)],
        )
        .unwrap();
        let s = dataset_stats(&split);
        assert_eq!(s.avg_length, 4.0);
        assert!(s.vocab_size <= 4);

        let twice = DatasetSplit::new(
            "t",
            LabelScheme::binary(),
            vec![ex("a b a", 0), ex("a b a", 0)],
            vec![ex("x", 1)],
            vec![ex("y", 1)],
        )
        .unwrap();
        assert_eq!(dataset_stats(&twice).vocab_size, 2);
    }

    #[test]
    fn load_rejects_bad_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path();
        fs::write(p.join("train.tsv"), "0\tgood\n7\tbad\n").unwrap();
        fs::write(p.join("dev.tsv"), "1\tok\n").unwrap();
        fs::write(p.join("test.tsv"), "1\tok\n").unwrap();
        match load_dataset(p, LabelScheme::with_labels(5).unwrap()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }

        fs::write(p.join("train.tsv"), "0 no tab here\n").unwrap();
        assert!(matches!(
            load_dataset(p, LabelScheme::binary()),
            Err(Error::Parse { line: 1, .. })
        ));

        fs::write(p.join("train.tsv"), "0\t   \n").unwrap();
        assert!(load_dataset(p, LabelScheme::binary()).is_err());
    }

    #[test]
    fn infer_scheme_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path();
        fs::write(p.join("train.tsv"), "0\tgood\n3\tbad\n").unwrap();
        fs::write(p.join("dev.tsv"), "1\tok\n").unwrap();
        fs::write(p.join("test.tsv"), "1\tok\n").unwrap();
        assert_eq!(infer_scheme(p).unwrap().num_labels(), 4);
    }
}
