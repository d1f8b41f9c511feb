//! Word embedding matrices and a skip-gram negative-sampling trainer.
//!
//! An [`EmbeddingMatrix`] maps each vocabulary word to a dense row. Words
//! outside the vocabulary get a pseudo-random vector with coordinates uniform
//! in [-0.25, 0.25], generated on demand from a seed derived from the word so
//! that repeated lookups agree and the matrix is never touched.

use std::borrow::Cow;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Half-width of the uniform range used for out-of-vocabulary vectors.
pub const OOV_RANGE: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    vocab: Vocabulary,
    dim: usize,
    data: Vec<f64>,
    oov_seed: u64,
}

impl EmbeddingMatrix {
    pub fn new(vocab: Vocabulary, dim: usize, data: Vec<f64>, oov_seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        if data.len() != vocab.len() * dim {
            return Err(Error::shape(
                format!("{}x{dim}", vocab.len()),
                format!("{} values", data.len()),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value in row {} ({})",
                pos / dim,
                vocab.word(pos / dim)
            )));
        }
        Ok(EmbeddingMatrix {
            vocab,
            dim,
            data,
            oov_seed,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn oov_seed(&self) -> u64 {
        self.oov_seed
    }

    pub fn with_oov_seed(mut self, seed: u64) -> Self {
        self.oov_seed = seed;
        self
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, idx: usize) -> &[f64] {
        &self.data[idx * self.dim..(idx + 1) * self.dim]
    }

    /// Stored row for in-vocabulary words, otherwise the word's OOV vector.
    pub fn lookup(&self, word: &str) -> Cow<'_, [f64]> {
        match self.vocab.get(word) {
            Some(idx) => Cow::Borrowed(self.row(idx)),
            None => Cow::Owned(oov_vector(self.oov_seed, word, self.dim)),
        }
    }

    /// Reads the whitespace-separated text format, with or without the
    /// `<vocab_size> <dim>` header line.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = content
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .peekable();

        let mut header: Option<(usize, usize)> = None;
        if let Some((_, first)) = lines.peek() {
            let fields: Vec<&str> = first.split_whitespace().collect();
            if let [n, d] = fields[..] {
                if let (Ok(n), Ok(d)) = (n.parse::<usize>(), d.parse::<usize>()) {
                    header = Some((n, d));
                    lines.next();
                }
            }
        }

        let mut vocab = Vocabulary::from_entries(std::iter::empty())?;
        let mut data = Vec::new();
        let mut dim = header.map(|(_, d)| d);
        for (idx, line) in lines {
            let line_no = idx + 1;
            let mut fields = line.split_whitespace();
            let word = fields.next().expect("non-empty line");
            let mut values = 0usize;
            for field in fields {
                let v: f64 = field.parse().map_err(|_| {
                    Error::parse(path, line_no, format!("{field:?} is not a number"))
                })?;
                data.push(v);
                values += 1;
            }
            match dim {
                Some(d) if d != values => {
                    return Err(Error::parse(
                        path,
                        line_no,
                        format!("expected {d} values, found {values}"),
                    ))
                }
                None => dim = Some(values),
                _ => {}
            }
            vocab
                .insert(word.to_string(), 0)
                .map_err(|_| Error::parse(path, line_no, format!("duplicate word {word:?}")))?;
        }
        if let Some((n, _)) = header {
            if n != vocab.len() {
                return Err(Error::parse(
                    path,
                    1,
                    format!("header announces {n} words, file has {}", vocab.len()),
                ));
            }
        }
        let dim = dim.ok_or_else(|| Error::parse(path, 1, "no embedding rows"))?;
        EmbeddingMatrix::new(vocab, dim, data, 0)
    }

    /// Writes the text format with a header line. Values use the shortest
    /// representation that parses back to the same `f64`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::with_capacity(self.data.len() * 12);
        writeln!(out, "{} {}", self.len(), self.dim).expect("write to Vec");
        for (i, word) in self.vocab.words().iter().enumerate() {
            out.extend_from_slice(word.as_bytes());
            for v in self.row(i) {
                write!(out, " {v}").expect("write to Vec");
            }
            out.push(b'\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Deterministic vector for a word missing from the vocabulary.
pub fn oov_vector(seed: u64, word: &str, dim: usize) -> Vec<f64> {
    let mut rng = rng::seeded(seed ^ rng::fnv1a(word.as_bytes()).rotate_left(17));
    (0..dim)
        .map(|_| rng.gen_range(-OOV_RANGE..=OOV_RANGE))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipgramConfig {
    pub dim: usize,
    /// Maximum distance between center and context words.
    pub window: usize,
    pub negatives: usize,
    /// Frequency threshold for subsampling frequent words.
    pub subsample: f64,
    pub iterations: usize,
    /// Starting learning rate, decayed linearly to `min_learning_rate`.
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    pub min_count: u64,
    pub seed: u64,
}

impl Default for SkipgramConfig {
    fn default() -> Self {
        SkipgramConfig {
            dim: 100,
            window: 10,
            negatives: 5,
            subsample: 1e-4,
            iterations: 5,
            learning_rate: 0.025,
            min_learning_rate: 0.0001,
            min_count: 5,
            seed: 1,
        }
    }
}

impl SkipgramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("skip-gram dim must be positive"));
        }
        if self.window == 0 || self.negatives == 0 {
            return Err(Error::invalid("window and negatives must be at least 1"));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::invalid("subsample must lie in (0, 1]"));
        }
        if !(self.learning_rate > 0.0) || self.min_learning_rate < 0.0 {
            return Err(Error::invalid("learning rates must be positive"));
        }
        Ok(())
    }
}

/// One (center, context, negatives) triple of a fixed loss probe.
#[derive(Debug, Clone, PartialEq)]
pub struct SkipgramProbe {
    pub center: usize,
    pub context: usize,
    pub negatives: Vec<usize>,
}

/// Stateful skip-gram trainer. Single-threaded, so a fixed seed gives
/// bitwise-identical vectors.
pub struct SkipgramTrainer {
    config: SkipgramConfig,
    vocab: Vocabulary,
    sentences: Vec<Vec<usize>>,
    input: Vec<f64>,
    output: Vec<f64>,
    noise_cdf: Vec<f64>,
    rng: Rng,
    total_tokens: u64,
    processed: u64,
    epochs_done: usize,
}

impl SkipgramTrainer {
    pub fn new<S: AsRef<[String]>>(corpus: &[S], config: SkipgramConfig) -> Result<Self> {
        config.validate()?;
        if corpus.is_empty() {
            return Err(Error::invalid("empty corpus"));
        }
        let vocab = Vocabulary::build(corpus.iter().map(|s| s.as_ref()), config.min_count)?;
        let sentences: Vec<Vec<usize>> = corpus
            .iter()
            .map(|s| s.as_ref().iter().filter_map(|w| vocab.get(w)).collect())
            .collect();
        let total_tokens = sentences.iter().map(|s| s.len() as u64).sum();

        let mut cdf = Vec::with_capacity(vocab.len());
        let mut acc = 0.0;
        for &c in vocab.counts() {
            acc += (c as f64).powf(0.75);
            cdf.push(acc);
        }
        for v in &mut cdf {
            *v /= acc;
        }

        let mut rng = rng::seeded(config.seed);
        let dim = config.dim;
        let input = (0..vocab.len() * dim)
            .map(|_| (rng.gen::<f64>() - 0.5) / dim as f64)
            .collect();
        let output = vec![0.0; vocab.len() * dim];

        Ok(SkipgramTrainer {
            config,
            vocab,
            sentences,
            input,
            output,
            noise_cdf: cdf,
            rng,
            total_tokens,
            processed: 0,
            epochs_done: 0,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    fn sample_noise(&mut self) -> usize {
        let u: f64 = self.rng.gen();
        self.noise_cdf
            .partition_point(|&c| c < u)
            .min(self.noise_cdf.len() - 1)
    }

    fn learning_rate(&self) -> f64 {
        let budget = (self.config.iterations as u64 * self.total_tokens).max(1) as f64;
        let progress = (self.processed as f64 / budget).min(1.0);
        let c = &self.config;
        (c.learning_rate - (c.learning_rate - c.min_learning_rate) * progress)
            .max(c.min_learning_rate)
    }

    fn keep_probability(&self, word: usize) -> f64 {
        let threshold = self.config.subsample * self.total_tokens as f64;
        let count = self.vocab.count(word) as f64;
        ((count / threshold).sqrt() + 1.0) * threshold / count
    }

    /// One pass over the corpus.
    pub fn train_epoch(&mut self) {
        let dim = self.config.dim;
        let mut grad = vec![0.0; dim];
        let keep: Vec<f64> = (0..self.vocab.len()).map(|w| self.keep_probability(w)).collect();
        let sentences = std::mem::take(&mut self.sentences);
        for sentence in &sentences {
            let rng = &mut self.rng;
            let kept: Vec<usize> = sentence
                .iter()
                .copied()
                .filter(|&w| keep[w] >= 1.0 || rng.gen::<f64>() < keep[w])
                .collect();
            for (pos, &center) in kept.iter().enumerate() {
                let lr = self.learning_rate();
                let reach = self.rng.gen_range(1..=self.config.window);
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(kept.len() - 1);
                for (ctx_pos, &context) in kept.iter().enumerate().take(hi + 1).skip(lo) {
                    if ctx_pos == pos {
                        continue;
                    }
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    for k in 0..=self.config.negatives {
                        let (target, label) = if k == 0 {
                            (context, 1.0)
                        } else {
                            let n = self.sample_noise();
                            if n == context {
                                continue;
                            }
                            (n, 0.0)
                        };
                        let in_row = &self.input[center * dim..(center + 1) * dim];
                        let out_row = &mut self.output[target * dim..(target + 1) * dim];
                        let dot: f64 = in_row.iter().zip(out_row.iter()).map(|(a, b)| a * b).sum();
                        let g = (label - sigmoid(dot)) * lr;
                        for d in 0..dim {
                            grad[d] += g * out_row[d];
                            out_row[d] += g * in_row[d];
                        }
                    }
                    let in_row = &mut self.input[center * dim..(center + 1) * dim];
                    for d in 0..dim {
                        in_row[d] += grad[d];
                    }
                }
            }
            self.processed += sentence.len() as u64;
        }
        self.sentences = sentences;
        self.epochs_done += 1;
    }

    /// Runs the remaining configured iterations.
    pub fn train(&mut self) {
        while self.epochs_done < self.config.iterations {
            self.train_epoch();
        }
    }

    /// Draws `count` probe triples from in-window pairs of the corpus using
    /// an independent seed, so probing never perturbs training.
    pub fn sample_probes(&self, count: usize, seed: u64) -> Vec<SkipgramProbe> {
        let mut rng = rng::seeded(seed);
        let usable: Vec<&Vec<usize>> = self.sentences.iter().filter(|s| s.len() > 1).collect();
        if usable.is_empty() {
            return Vec::new();
        }
        let draw_noise = |rng: &mut Rng| {
            let u: f64 = rng.gen();
            self.noise_cdf
                .partition_point(|&c| c < u)
                .min(self.noise_cdf.len() - 1)
        };
        (0..count)
            .map(|_| {
                let s = usable[rng.gen_range(0..usable.len())];
                let pos = rng.gen_range(0..s.len());
                let mut ctx = pos;
                while ctx == pos {
                    let lo = pos.saturating_sub(self.config.window);
                    let hi = (pos + self.config.window).min(s.len() - 1);
                    ctx = rng.gen_range(lo..=hi);
                }
                let negatives = (0..self.config.negatives).map(|_| draw_noise(&mut rng)).collect();
                SkipgramProbe {
                    center: s[pos],
                    context: s[ctx],
                    negatives,
                }
            })
            .collect()
    }

    /// Mean negative-sampling loss over `probes`.
    pub fn probe_loss(&self, probes: &[SkipgramProbe]) -> f64 {
        if probes.is_empty() {
            return 0.0;
        }
        let dim = self.config.dim;
        let dot = |a: usize, b: usize| -> f64 {
            self.input[a * dim..(a + 1) * dim]
                .iter()
                .zip(&self.output[b * dim..(b + 1) * dim])
                .map(|(x, y)| x * y)
                .sum()
        };
        let total: f64 = probes
            .iter()
            .map(|p| {
                let pos = -log_sigmoid(dot(p.center, p.context));
                let neg: f64 = p.negatives.iter().map(|&n| -log_sigmoid(-dot(p.center, n))).sum();
                pos + neg
            })
            .sum();
        total / probes.len() as f64
    }

    /// Current input vectors as an embedding matrix.
    pub fn embeddings(&self) -> EmbeddingMatrix {
        EmbeddingMatrix::new(
            self.vocab.clone(),
            self.config.dim,
            self.input.clone(),
            self.config.seed,
        )
        .expect("trainer keeps vectors finite")
    }
}

/// Trains skip-gram vectors with negative sampling over `corpus`.
pub fn train_skipgram<S: AsRef<[String]>>(
    corpus: &[S],
    config: SkipgramConfig,
) -> Result<EmbeddingMatrix> {
    let mut trainer = SkipgramTrainer::new(corpus, config)?;
    trainer.train();
    Ok(trainer.embeddings())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(words: &[&str]) -> Vocabulary {
        Vocabulary::from_entries(words.iter().map(|w| (w.to_string(), 1))).unwrap()
    }

    /// "cat" and "dog" always share a sentence; "rock" lives with other words.
    fn synthetic_corpus() -> Vec<Vec<String>> {
        let mut rng = rng::seeded(11);
        let fillers = ["the", "a", "on", "is", "big"];
        let mut corpus = Vec::new();
        for i in 0..400 {
            let mut s: Vec<String> = (0..4)
                .map(|_| fillers[rng.gen_range(0..fillers.len())].to_string())
                .collect();
            if i % 2 == 0 {
                s.insert(1, "cat".into());
                s.insert(3, "dog".into());
            } else {
                s.insert(1, "rock".into());
                s.insert(3, "stone".into());
            }
            corpus.push(s);
        }
        corpus
    }

    fn small_config() -> SkipgramConfig {
        SkipgramConfig {
            dim: 16,
            window: 3,
            min_count: 1,
            subsample: 1.0,
            iterations: 5,
            ..SkipgramConfig::default()
        }
    }

    #[test]
    fn cooccurring_words_end_up_closer() {
        let emb = train_skipgram(&synthetic_corpus(), small_config()).unwrap();
        let cat = emb.lookup("cat");
        let dog = emb.lookup("dog");
        let rock = emb.lookup("rock");
        assert!(cosine(&cat, &dog) > cosine(&cat, &rock));
    }

    #[test]
    fn zero_iterations_is_initialization() {
        let corpus = synthetic_corpus();
        let cfg = SkipgramConfig {
            iterations: 0,
            ..small_config()
        };
        let trained = train_skipgram(&corpus, cfg.clone()).unwrap();
        let init = SkipgramTrainer::new(&corpus, cfg).unwrap().embeddings();
        assert_eq!(trained, init);
    }

    #[test]
    fn training_is_deterministic() {
        let corpus = synthetic_corpus();
        let a = train_skipgram(&corpus, small_config()).unwrap();
        let b = train_skipgram(&corpus, small_config()).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn probe_loss_decreases_and_stays_finite() {
        let corpus = synthetic_corpus();
        let mut trainer = SkipgramTrainer::new(&corpus, small_config()).unwrap();
        let probes = trainer.sample_probes(200, 99);
        let before = trainer.probe_loss(&probes);
        trainer.train();
        let after = trainer.probe_loss(&probes);
        assert!(after < before, "{after} >= {before}");
        assert!(trainer.embeddings().data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn empty_vocabulary_is_rejected() {
        let corpus = vec![vec!["a".to_string()]];
        let cfg = SkipgramConfig {
            min_count: 2,
            ..small_config()
        };
        assert!(train_skipgram(&corpus, cfg).is_err());
        let empty: Vec<Vec<String>> = Vec::new();
        assert!(train_skipgram(&empty, small_config()).is_err());
    }

    #[test]
    fn parse_two_by_three_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.txt");
        fs::write(&path, "2 3\nfoo 1 2 3\nbar -0.5 0 1e-3\n").unwrap();
        let emb = EmbeddingMatrix::load(&path).unwrap();
        assert_eq!((emb.len(), emb.dim()), (2, 3));
        assert_eq!(emb.row(0), &[1.0, 2.0, 3.0]);
        assert_eq!(emb.row(1), &[-0.5, 0.0, 1e-3]);

        fs::write(&path, "foo 1 2 3\nbar 4 5 6\n").unwrap();
        assert_eq!(EmbeddingMatrix::load(&path).unwrap().len(), 2);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.txt");
        fs::write(&path, "foo 1 2 3\nbar 4 5 6 7\n").unwrap();
        assert!(matches!(
            EmbeddingMatrix::load(&path),
            Err(Error::Parse { line: 2, .. })
        ));
        fs::write(&path, "foo 1 2\nfoo 3 4\n").unwrap();
        assert!(EmbeddingMatrix::load(&path).is_err());
        fs::write(&path, "3 2\nfoo 1 2\n").unwrap();
        assert!(EmbeddingMatrix::load(&path).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let mut rng = rng::seeded(5);
        let words: Vec<String> = (0..10).map(|i| format!("w{i}")).collect();
        let v = Vocabulary::from_entries(words.into_iter().map(|w| (w, 1))).unwrap();
        let data: Vec<f64> = (0..500).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let emb = EmbeddingMatrix::new(v, 50, data, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.txt");
        emb.save(&path).unwrap();
        let back = EmbeddingMatrix::load(&path).unwrap();
        let max_diff = emb
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_diff < 1e-6);
        assert_eq!(emb.vocab().words(), back.vocab().words());
    }

    #[test]
    fn lookup_in_and_out_of_vocabulary() {
        let emb = EmbeddingMatrix::new(vocab(&["a", "b"]), 2, vec![1.0, 2.0, 3.0, 4.0], 9).unwrap();
        assert_eq!(&*emb.lookup("b"), &[3.0, 4.0]);
        let before = emb.clone();
        let x = emb.lookup("zebra").into_owned();
        let y = emb.lookup("zebra").into_owned();
        assert_eq!(x, y);
        assert_ne!(x, emb.lookup("yak").into_owned());
        assert_eq!(emb, before);
    }

    #[test]
    fn oov_coordinates_are_bounded_and_centered() {
        let values: Vec<f64> = (0..1000)
            .flat_map(|i| oov_vector(3, &format!("oov{i}"), 10))
            .collect();
        assert_eq!(values.len(), 10_000);
        assert!(values.iter().all(|v| v.abs() <= OOV_RANGE));
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn rejects_non_finite_rows() {
        assert!(EmbeddingMatrix::new(vocab(&["a"]), 1, vec![f64::NAN], 0).is_err());
        assert!(EmbeddingMatrix::new(vocab(&["a"]), 2, vec![0.0], 0).is_err());
    }
}
