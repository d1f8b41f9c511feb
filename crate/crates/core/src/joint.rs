//! Sentiment-aware embeddings trained on distantly labeled text with a
//! combined corrupted-window hinge loss and sentiment hinge loss.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{tokenize, Vocabulary};
use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::neural::{Activation, Dense, DenseTrace, Parameter, Tensor};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    /// `+1` or `-1`.
    pub fn sign(self) -> f64 {
        match self {
            Polarity::Positive => 1.0,
            Polarity::Negative => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistantExample {
    pub tokens: Vec<String>,
    pub polarity: Polarity,
}

/// Marker strings used for distant labeling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistantMarkers {
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

impl Default for DistantMarkers {
    fn default() -> Self {
        DistantMarkers {
            positive: [":)", ":-)", ":D", "=)"].map(String::from).to_vec(),
            negative: [":(", ":-("].map(String::from).to_vec(),
        }
    }
}

impl DistantMarkers {
    /// Adds hashtag markers (e.g. `#happy`) to the emoticon lists.
    pub fn with_hashtags(mut self, positive: &[&str], negative: &[&str]) -> Self {
        self.positive.extend(positive.iter().map(|s| s.to_string()));
        self.negative.extend(negative.iter().map(|s| s.to_string()));
        self
    }

    /// Removes every marker occurrence from `text`, longest markers first.
    pub fn strip(&self, text: &str) -> String {
        let mut markers: Vec<&String> = self.positive.iter().chain(&self.negative).collect();
        markers.sort_by_key(|m| std::cmp::Reverse(m.len()));
        let mut out = text.to_string();
        for m in markers {
            out = out.replace(m.as_str(), " ");
        }
        out
    }
}

/// `Positive` if the text carries a positive marker and no negative one,
/// `Negative` in the mirrored case, otherwise `None`.
pub fn distant_label(text: &str, markers: &DistantMarkers) -> Option<Polarity> {
    let pos = markers.positive.iter().any(|m| text.contains(m.as_str()));
    let neg = markers.negative.iter().any(|m| text.contains(m.as_str()));
    match (pos, neg) {
        (true, false) => Some(Polarity::Positive),
        (false, true) => Some(Polarity::Negative),
        _ => None,
    }
}

/// Labels raw lines, strips the markers and tokenizes. Lines without a
/// decisive label, or with no tokens left, are skipped.
pub fn label_corpus<'a>(
    lines: impl IntoIterator<Item = &'a str>,
    markers: &DistantMarkers,
) -> Vec<DistantExample> {
    lines
        .into_iter()
        .filter_map(|line| {
            let polarity = distant_label(line, markers)?;
            let tokens = tokenize(&markers.strip(line));
            (!tokens.is_empty()).then_some(DistantExample { tokens, polarity })
        })
        .collect()
}

/// Reads a one-text-per-line corpus and labels it with [`label_corpus`].
pub fn load_distant_corpus(path: impl AsRef<Path>, markers: &DistantMarkers) -> Result<Vec<DistantExample>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(label_corpus(text.lines(), markers))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointConfig {
    pub dim: usize,
    pub window: usize,
    pub hidden: usize,
    pub alpha: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub min_count: u64,
    pub seed: u64,
}

impl Default for JointConfig {
    fn default() -> Self {
        JointConfig {
            dim: 50,
            window: 3,
            hidden: 20,
            alpha: 0.5,
            learning_rate: 0.1,
            epochs: 5,
            min_count: 1,
            seed: 1,
        }
    }
}

impl JointConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window % 2 == 0 {
            return Err(Error::invalid(format!("window must be odd, got {}", self.window)));
        }
        check_alpha(self.alpha)?;
        if self.dim == 0 || self.hidden == 0 {
            return Err(Error::invalid("dim and hidden must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

/// Replaces the center of `window` with a uniformly drawn different word
/// from `0..vocab_size`.
pub fn corrupt_window(window: &[usize], vocab_size: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if vocab_size < 2 {
        return Err(Error::invalid("corruption needs at least two vocabulary words"));
    }
    if window.is_empty() {
        return Err(Error::invalid("empty window"));
    }
    let mid = window.len() / 2;
    let center = window[mid];
    let mut draw = rng.gen_range(0..vocab_size - 1);
    if center < vocab_size && draw >= center {
        draw += 1;
    }
    let mut out = window.to_vec();
    out[mid] = draw;
    Ok(out)
}

/// The three hinge losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLosses {
    pub cw: f64,
    pub sentiment: f64,
    pub combined: f64,
}

/// Losses from raw scores: `cw_*` are language-model scores, `s_*` are the
/// first sentiment score of the true and corrupted window.
pub fn hinge_losses(
    cw_true: f64,
    cw_corrupt: f64,
    s_true: f64,
    s_corrupt: f64,
    polarity: Polarity,
    alpha: f64,
) -> Result<JointLosses> {
    check_alpha(alpha)?;
    let delta = polarity.sign();
    let cw = (1.0 - cw_true + cw_corrupt).max(0.0);
    let sentiment = (1.0 - delta * s_true + delta * s_corrupt).max(0.0);
    Ok(JointLosses {
        cw,
        sentiment,
        combined: alpha * cw + (1.0 - alpha) * sentiment,
    })
}

/// Scores for one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowScores {
    pub cw: f64,
    pub sentiment: [f64; 2],
}

/// Embedding lookup, hard-tanh hidden layer and two linear heads. The last
/// embedding row is the padding vector used beyond sentence boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointScorer {
    pub embeddings: Parameter,
    pub hidden: Dense,
    pub cw_head: Dense,
    pub sentiment_head: Dense,
}

struct ScoreTrace {
    input: Vec<f64>,
    hidden: DenseTrace,
    activations: Vec<f64>,
    cw: DenseTrace,
    sentiment: DenseTrace,
}

/// Gradients of the combined loss for one window pair. Dense-layer gradients
/// are accumulated into the scorer's parameters; embedding gradients are
/// returned per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingGradient {
    pub rows: BTreeMap<usize, Vec<f64>>,
}

impl JointScorer {
    /// `vocab_size` real words plus one padding row.
    pub fn new(vocab_size: usize, config: &JointConfig, rng: &mut Rng) -> Self {
        let bound = 0.5 / config.dim as f64;
        JointScorer {
            embeddings: Parameter::new(Tensor::uniform(&[vocab_size + 1, config.dim], bound.max(0.01), rng)),
            hidden: Dense::new(config.window * config.dim, config.hidden, Activation::HardTanh, rng),
            cw_head: Dense::new(config.hidden, 1, Activation::Identity, rng),
            sentiment_head: Dense::new(config.hidden, 2, Activation::Identity, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.embeddings.value.shape()[1]
    }

    pub fn pad_index(&self) -> usize {
        self.embeddings.value.shape()[0] - 1
    }

    fn forward(&self, window: &[usize]) -> Result<(WindowScores, ScoreTrace)> {
        let rows = self.embeddings.value.shape()[0];
        let mut input = Vec::with_capacity(window.len() * self.dim());
        for &w in window {
            if w >= rows {
                return Err(Error::invalid(format!("word index {w} outside {rows} rows")));
            }
            input.extend_from_slice(self.embeddings.value.row(w));
        }
        let (activations, hidden) = self.hidden.forward(&input)?;
        let (cw_out, cw) = self.cw_head.forward(&activations)?;
        let (s_out, sentiment) = self.sentiment_head.forward(&activations)?;
        Ok((
            WindowScores {
                cw: cw_out[0],
                sentiment: [s_out[0], s_out[1]],
            },
            ScoreTrace {
                input,
                hidden,
                activations,
                cw,
                sentiment,
            },
        ))
    }

    pub fn score(&self, window: &[usize]) -> Result<WindowScores> {
        Ok(self.forward(window)?.0)
    }

    pub fn losses(&self, t: &[usize], t_r: &[usize], polarity: Polarity, alpha: f64) -> Result<JointLosses> {
        if t.len() != t_r.len() {
            return Err(Error::shape(format!("window of {}", t.len()), format!("window of {}", t_r.len())));
        }
        let a = self.score(t)?;
        let b = self.score(t_r)?;
        hinge_losses(a.cw, b.cw, a.sentiment[0], b.sentiment[0], polarity, alpha)
    }

    /// Computes the losses and backpropagates the combined loss. Hinges at
    /// exactly zero contribute no gradient.
    pub fn backward(
        &mut self,
        t: &[usize],
        t_r: &[usize],
        polarity: Polarity,
        alpha: f64,
    ) -> Result<(JointLosses, EmbeddingGradient)> {
        if t.len() != t_r.len() {
            return Err(Error::shape(format!("window of {}", t.len()), format!("window of {}", t_r.len())));
        }
        let (a, tr_a) = self.forward(t)?;
        let (b, tr_b) = self.forward(t_r)?;
        let losses = hinge_losses(a.cw, b.cw, a.sentiment[0], b.sentiment[0], polarity, alpha)?;
        let g_cw = if losses.cw > 0.0 { alpha } else { 0.0 };
        let g_s = if losses.sentiment > 0.0 {
            (1.0 - alpha) * polarity.sign()
        } else {
            0.0
        };
        let mut grad = EmbeddingGradient { rows: BTreeMap::new() };
        if g_cw == 0.0 && g_s == 0.0 {
            return Ok((losses, grad));
        }
        for (window, trace, sign) in [(t, &tr_a, -1.0), (t_r, &tr_b, 1.0)] {
            let mut d_act = self.cw_head.backward(&trace.activations, &trace.cw, &[sign * g_cw]);
            let d_s = self
                .sentiment_head
                .backward(&trace.activations, &trace.sentiment, &[sign * g_s, 0.0]);
            for (x, y) in d_act.iter_mut().zip(d_s) {
                *x += y;
            }
            let d_input = self.hidden.backward(&trace.input, &trace.hidden, &d_act);
            let d = self.dim();
            for (k, &w) in window.iter().enumerate() {
                let row = grad.rows.entry(w).or_insert_with(|| vec![0.0; d]);
                for (r, g) in row.iter_mut().zip(&d_input[k * d..(k + 1) * d]) {
                    *r += g;
                }
            }
        }
        Ok((losses, grad))
    }

    fn dense_params_mut(&mut self) -> [&mut Parameter; 6] {
        [
            &mut self.hidden.weight,
            &mut self.hidden.bias,
            &mut self.cw_head.weight,
            &mut self.cw_head.bias,
            &mut self.sentiment_head.weight,
            &mut self.sentiment_head.bias,
        ]
    }

    pub fn zero_grad(&mut self) {
        for p in self.dense_params_mut() {
            p.zero_grad();
        }
    }

    fn sgd_step(&mut self, grad: &EmbeddingGradient, lr: f64) {
        for p in self.dense_params_mut() {
            let Parameter { value, grad, .. } = p;
            for (w, g) in value.data_mut().iter_mut().zip(grad.data_mut()) {
                *w -= lr * *g;
                *g = 0.0;
            }
        }
        for (&r, g) in &grad.rows {
            for (w, gi) in self.embeddings.value.row_mut(r).iter_mut().zip(g) {
                *w -= lr * gi;
            }
        }
    }
}

/// A fixed window pair for monitoring the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct JointProbe {
    pub window: Vec<usize>,
    pub corrupted: Vec<usize>,
    pub polarity: Polarity,
}

pub struct JointTrainer {
    config: JointConfig,
    vocab: Vocabulary,
    sentences: Vec<(Vec<usize>, Polarity)>,
    scorer: JointScorer,
    rng: Rng,
    epochs_done: usize,
}

impl JointTrainer {
    pub fn new(corpus: &[DistantExample], config: JointConfig) -> Result<Self> {
        config.validate()?;
        if corpus.is_empty() {
            return Err(Error::invalid("empty distant corpus"));
        }
        let has_pos = corpus.iter().any(|e| e.polarity == Polarity::Positive);
        let has_neg = corpus.iter().any(|e| e.polarity == Polarity::Negative);
        if !(has_pos && has_neg) {
            log::warn!("distant corpus has a single polarity; the sentiment loss is degenerate");
        }
        let vocab = Vocabulary::build(corpus.iter().map(|e| &e.tokens[..]), config.min_count)?;
        if vocab.len() < 2 {
            return Err(Error::invalid("corruption needs at least two vocabulary words"));
        }
        let sentences = corpus
            .iter()
            .map(|e| (e.tokens.iter().filter_map(|w| vocab.get(w)).collect::<Vec<_>>(), e.polarity))
            .filter(|(s, _)| !s.is_empty())
            .collect();
        let mut rng = rng::seeded(config.seed);
        let scorer = JointScorer::new(vocab.len(), &config, &mut rng);
        Ok(JointTrainer {
            config,
            vocab,
            sentences,
            scorer,
            rng,
            epochs_done: 0,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn scorer(&self) -> &JointScorer {
        &self.scorer
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    fn window_at(&self, sentence: &[usize], center: usize) -> Vec<usize> {
        let half = (self.config.window / 2) as isize;
        let pad = self.scorer.pad_index();
        (-half..=half)
            .map(|o| {
                let p = center as isize + o;
                if p < 0 || p as usize >= sentence.len() {
                    pad
                } else {
                    sentence[p as usize]
                }
            })
            .collect()
    }

    /// One SGD pass over every window in shuffled sentence order, with one
    /// corruption per window. Returns the mean combined loss.
    pub fn train_epoch(&mut self) -> Result<f64> {
        let mut order: Vec<usize> = (0..self.sentences.len()).collect();
        order.shuffle(&mut self.rng);
        let (mut total, mut count) = (0.0, 0usize);
        let v = self.vocab.len();
        for s in order {
            let len = self.sentences[s].0.len();
            let polarity = self.sentences[s].1;
            for c in 0..len {
                let window = self.window_at(&self.sentences[s].0, c);
                let corrupted = corrupt_window(&window, v, &mut self.rng)?;
                let (losses, grad) = self.scorer.backward(&window, &corrupted, polarity, self.config.alpha)?;
                self.scorer.sgd_step(&grad, self.config.learning_rate);
                total += losses.combined;
                count += 1;
            }
        }
        self.epochs_done += 1;
        Ok(if count == 0 { 0.0 } else { total / count as f64 })
    }

    pub fn train(&mut self) -> Result<()> {
        while self.epochs_done < self.config.epochs {
            let loss = self.train_epoch()?;
            log::debug!("joint epoch {}: mean loss {loss:.4}", self.epochs_done);
        }
        Ok(())
    }

    /// Random window pairs from the training corpus, independent of the
    /// trainer's own random stream.
    pub fn sample_probes(&self, count: usize, seed: u64) -> Result<Vec<JointProbe>> {
        let mut rng = rng::seeded(seed);
        let mut probes = Vec::with_capacity(count);
        for _ in 0..count {
            let (sentence, polarity) = &self.sentences[rng.gen_range(0..self.sentences.len())];
            let window = self.window_at(sentence, rng.gen_range(0..sentence.len()));
            let corrupted = corrupt_window(&window, self.vocab.len(), &mut rng)?;
            probes.push(JointProbe {
                window,
                corrupted,
                polarity: *polarity,
            });
        }
        Ok(probes)
    }

    pub fn probe_loss(&self, probes: &[JointProbe]) -> Result<f64> {
        let mut total = 0.0;
        for p in probes {
            total += self
                .scorer
                .losses(&p.window, &p.corrupted, p.polarity, self.config.alpha)?
                .combined;
        }
        Ok(total / probes.len().max(1) as f64)
    }

    /// Fraction of training windows whose center word satisfies `select` for
    /// which `δ·(f_s(t) − f_s(t_r)) > 0` against a fresh corruption.
    pub fn sentiment_hinge_accuracy(&self, select: impl Fn(&str) -> bool, seed: u64) -> Result<f64> {
        let mut rng = rng::seeded(seed);
        let (mut hits, mut total) = (0usize, 0usize);
        for (sentence, polarity) in &self.sentences {
            for (c, &w) in sentence.iter().enumerate() {
                if !select(self.vocab.word(w)) {
                    continue;
                }
                let window = self.window_at(sentence, c);
                let corrupted = corrupt_window(&window, self.vocab.len(), &mut rng)?;
                let a = self.scorer.score(&window)?.sentiment[0];
                let b = self.scorer.score(&corrupted)?.sentiment[0];
                hits += usize::from(polarity.sign() * (a - b) > 0.0);
                total += 1;
            }
        }
        if total == 0 {
            return Err(Error::invalid("no window matches the selection"));
        }
        Ok(hits as f64 / total as f64)
    }

    /// The word vectors (padding row excluded).
    pub fn embeddings(&self) -> Result<EmbeddingMatrix> {
        let d = self.config.dim;
        let data = self.scorer.embeddings.value.data()[..self.vocab.len() * d].to_vec();
        EmbeddingMatrix::new(self.vocab.clone(), d, data, self.config.seed)
    }
}

/// Trains joint embeddings for `config.epochs` epochs.
pub fn train_joint(corpus: &[DistantExample], config: JointConfig) -> Result<EmbeddingMatrix> {
    let mut trainer = JointTrainer::new(corpus, config)?;
    trainer.train()?;
    trainer.embeddings()
}
