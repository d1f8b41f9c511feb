//! The seven benchmark systems behind one train/predict interface.
//!
//! | kind     | representation                         | classifier           |
//! |----------|----------------------------------------|----------------------|
//! | BOW      | token counts over the training vocabulary | logistic regression |
//! | AVE      | mean word vector                       | logistic regression  |
//! | RETROFIT | mean of retrofitted word vectors       | logistic regression  |
//! | JOINT    | max, min and mean of joint vectors     | linear SVM           |
//! | LSTM     | final LSTM state                       | dense + softmax      |
//! | BILSTM   | concatenated final states              | dense + softmax      |
//! | CNN      | convolution widths 2/3/4 + max-pool    | dense + softmax      |

mod features;
pub mod net;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use features::{ave_features, bow_features, bow_row, minmaxavg_features};
pub use net::{EncoderKind, NetShape, SentimentNet, Slot, CNN_WIDTHS};

use crate::checkpoint::Checkpoint;
use crate::data::{tokenize, DatasetSplit, LabelScheme, LabeledExample, Partition, Vocabulary};
use crate::embeddings::{oov_vector, train_skipgram, EmbeddingMatrix, SkipgramConfig};
use crate::error::{Error, Result};
use crate::joint::{load_distant_corpus, train_joint, DistantMarkers, JointConfig};
use crate::linear::{
    predict_linear, select_lambda, train_logreg, train_svm, FeatureMatrix, LinearConfig, LinearModel, LossKind,
    LAMBDA_GRID,
};
use crate::linear::argmax as argmax_logits;
use crate::neural::{Adam, Mode, RowAdam, Tensor};
use crate::retrofit::{load_lexicon, retrofit_embeddings, LexiconGraph, RetrofitConfig};
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ModelKind {
    Bow,
    Ave,
    Retrofit,
    Joint,
    Lstm,
    Bilstm,
    Cnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Bow,
        ModelKind::Ave,
        ModelKind::Retrofit,
        ModelKind::Joint,
        ModelKind::Lstm,
        ModelKind::Bilstm,
        ModelKind::Cnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Bow => "BOW",
            ModelKind::Ave => "AVE",
            ModelKind::Retrofit => "RETROFIT",
            ModelKind::Joint => "JOINT",
            ModelKind::Lstm => "LSTM",
            ModelKind::Bilstm => "BILSTM",
            ModelKind::Cnn => "CNN",
        }
    }

    /// Neural kinds are trained once per seed; the others are deterministic.
    pub fn is_neural(self) -> bool {
        matches!(self, ModelKind::Lstm | ModelKind::Bilstm | ModelKind::Cnn)
    }

    /// Whether the kind reads pre-trained base embeddings.
    pub fn needs_base_embeddings(self) -> bool {
        !matches!(self, ModelKind::Bow | ModelKind::Joint)
    }

    fn encoder(self) -> Option<EncoderKind> {
        match self {
            ModelKind::Lstm => Some(EncoderKind::Lstm),
            ModelKind::Bilstm => Some(EncoderKind::BiLstm),
            ModelKind::Cnn => Some(EncoderKind::Cnn),
            _ => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown model kind {s:?}")))
    }
}

/// Where base word vectors come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EmbeddingSource {
    /// A word2vec-style text file.
    File(PathBuf),
    /// Skip-gram trained on the unlabeled text of the dataset itself; the
    /// vector size is taken from the model spec.
    Skipgram(SkipgramConfig),
}

/// Hidden-size grid searched on the development split.
pub const HIDDEN_GRID: [usize; 3] = [50, 100, 200];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub dim: usize,
    pub embeddings: Option<EmbeddingSource>,
    pub lexicon: Option<PathBuf>,
    pub retrofit_iterations: usize,
    pub joint_corpus: Option<PathBuf>,
    pub joint: JointConfig,
    /// Dense layer size; `None` tunes over [`HIDDEN_GRID`].
    pub hidden: Option<usize>,
    /// Training epochs; `None` selects them by early stopping on dev.
    pub epochs: Option<usize>,
    pub max_epochs: usize,
    pub patience: usize,
    /// L2 strength; `None` tunes over the linear-model grid.
    pub lambda: Option<f64>,
    pub linear_iterations: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// LSTM state size per direction.
    pub recurrent: usize,
    /// Filters per convolution width.
    pub filters: usize,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, dim: usize) -> Self {
        ModelSpec {
            kind,
            dim,
            embeddings: None,
            lexicon: None,
            retrofit_iterations: 10,
            joint_corpus: None,
            joint: JointConfig::default(),
            hidden: None,
            epochs: None,
            max_epochs: 30,
            patience: 5,
            lambda: None,
            linear_iterations: 500,
            dropout: 0.5,
            learning_rate: 0.001,
            batch_size: 32,
            recurrent: 50,
            filters: 50,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.kind;
        if self.dim == 0 {
            return Err(Error::invalid("dim must be positive"));
        }
        if kind.needs_base_embeddings() && self.embeddings.is_none() {
            return Err(Error::invalid(format!("{kind} needs an embedding source")));
        }
        if kind == ModelKind::Retrofit && self.lexicon.is_none() {
            return Err(Error::invalid("RETROFIT needs a lexicon"));
        }
        if kind == ModelKind::Joint && self.joint_corpus.is_none() {
            return Err(Error::invalid("JOINT needs a distant corpus"));
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::invalid(format!("lambda must be non-negative, got {l}")));
            }
        }
        if kind.is_neural() {
            if !(0.0..1.0).contains(&self.dropout) {
                return Err(Error::invalid(format!("dropout must lie in [0, 1), got {}", self.dropout)));
            }
            if self.batch_size == 0 || self.recurrent == 0 || self.filters == 0 || self.hidden == Some(0) {
                return Err(Error::invalid("batch size and layer sizes must be positive"));
            }
            if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
                return Err(Error::invalid("learning rate must be positive"));
            }
            if self.epochs.is_none() && self.max_epochs == 0 {
                return Err(Error::invalid("max_epochs must be positive for early stopping"));
            }
        }
        if kind == ModelKind::Joint {
            JointConfig {
                dim: self.dim,
                ..self.joint.clone()
            }
            .validate()?;
        }
        Ok(())
    }

    /// Whether any hyperparameter is still left to dev tuning.
    pub fn is_concrete(&self) -> bool {
        if self.kind.is_neural() {
            self.hidden.is_some() && self.epochs.is_some()
        } else {
            self.lambda.is_some()
        }
    }
}

fn tokenized(examples: &[LabeledExample]) -> Vec<Vec<String>> {
    examples.iter().map(|e| tokenize(&e.text)).collect()
}

fn labels(examples: &[LabeledExample]) -> Vec<usize> {
    examples.iter().map(|e| e.label).collect()
}

/// Base vectors of size `dim` from `source`.
pub fn base_embeddings(source: &EmbeddingSource, dim: usize, data: &DatasetSplit) -> Result<EmbeddingMatrix> {
    let emb = match source {
        EmbeddingSource::File(path) => EmbeddingMatrix::load(path)?,
        EmbeddingSource::Skipgram(cfg) => {
            let corpus: Vec<Vec<String>> = data.texts().map(tokenize).collect();
            train_skipgram(&corpus, SkipgramConfig { dim, ..cfg.clone() })?
        }
    };
    if emb.dim() != dim {
        return Err(Error::shape(format!("{dim}-d embeddings"), format!("{}-d", emb.dim())));
    }
    Ok(emb)
}

/// Resolves the word vectors a spec trains on: nothing for BOW, base vectors
/// for AVE and the neural kinds, retrofitted base vectors for RETROFIT and
/// joint vectors trained on the distant corpus for JOINT.
pub fn prepare_embeddings(spec: &ModelSpec, data: &DatasetSplit) -> Result<Option<EmbeddingMatrix>> {
    spec.validate()?;
    let base = || base_embeddings(spec.embeddings.as_ref().expect("validated"), spec.dim, data);
    Ok(match spec.kind {
        ModelKind::Bow => None,
        ModelKind::Retrofit => {
            let base = base()?;
            let graph = load_lexicon(spec.lexicon.as_ref().expect("validated"), base.vocab())?;
            Some(retrofit_with(&base, &graph, spec.retrofit_iterations)?)
        }
        ModelKind::Joint => {
            let corpus = load_distant_corpus(spec.joint_corpus.as_ref().expect("validated"), &DistantMarkers::default())?;
            Some(train_joint(
                &corpus,
                JointConfig {
                    dim: spec.dim,
                    ..spec.joint.clone()
                },
            )?)
        }
        _ => Some(base()?),
    })
}

fn retrofit_with(base: &EmbeddingMatrix, graph: &LexiconGraph, iterations: usize) -> Result<EmbeddingMatrix> {
    retrofit_embeddings(
        base,
        graph,
        &RetrofitConfig {
            iterations,
            ..RetrofitConfig::default()
        },
    )
}

/// Dev accuracy of one tuning candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub hidden: usize,
    pub epochs: usize,
    pub dev_accuracy: f64,
}

/// Index of the best candidate: highest dev accuracy, then the smaller hidden
/// size, then fewer epochs.
pub fn select_configuration(candidates: &[Candidate]) -> Option<usize> {
    (0..candidates.len()).min_by(|&a, &b| {
        let (x, y) = (&candidates[a], &candidates[b]);
        y.dev_accuracy
            .total_cmp(&x.dev_accuracy)
            .then(x.hidden.cmp(&y.hidden))
            .then(x.epochs.cmp(&y.epochs))
    })
}

/// Evaluates every hidden size with `evaluate` (returning dev accuracy and
/// the chosen epoch count) and picks the best by [`select_configuration`].
pub fn tune_with(hidden: &[usize], mut evaluate: impl FnMut(usize) -> Result<(f64, usize)>) -> Result<Candidate> {
    let mut candidates = Vec::with_capacity(hidden.len());
    for &h in hidden {
        let (dev_accuracy, epochs) = evaluate(h)?;
        candidates.push(Candidate {
            hidden: h,
            epochs,
            dev_accuracy,
        });
    }
    select_configuration(&candidates)
        .map(|i| candidates[i])
        .ok_or_else(|| Error::invalid("empty tuning grid"))
}

#[derive(Debug, Clone, PartialEq)]
enum Body {
    Bow { vocab: Vocabulary, model: LinearModel },
    Mean { embeddings: EmbeddingMatrix, model: LinearModel },
    MinMaxAvg { embeddings: EmbeddingMatrix, model: LinearModel },
    Neural { vocab: Vocabulary, oov_seed: u64, net: SentimentNet },
}

/// A trained classifier with a fully concrete spec.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    spec: ModelSpec,
    scheme: LabelScheme,
    dev_accuracy: Option<f64>,
    body: Body,
}

impl TrainedModel {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn scheme(&self) -> &LabelScheme {
        &self.scheme
    }

    /// Development accuracy of the selected configuration, when tuned.
    pub fn dev_accuracy(&self) -> Option<f64> {
        self.dev_accuracy
    }

    pub fn predict(&self, examples: &[Vec<String>]) -> Result<Vec<usize>> {
        match &self.body {
            Body::Bow { vocab, model } => predict_linear(model, &bow_matrix(examples, vocab)?),
            Body::Mean { embeddings, model } => predict_linear(model, &dense_matrix(examples, embeddings, ave_features)?),
            Body::MinMaxAvg { embeddings, model } => {
                predict_linear(model, &dense_matrix(examples, embeddings, minmaxavg_features)?)
            }
            Body::Neural { vocab, oov_seed, net } => {
                let mut rng = seeded(0);
                examples
                    .iter()
                    .map(|tokens| {
                        let slots = encode(tokens, vocab, *oov_seed, net.dim())?;
                        let (logits, _) = net.forward(&slots, Mode::Inference, &mut rng)?;
                        Ok(argmax_logits(&logits))
                    })
                    .collect()
            }
        }
    }

    pub fn predict_texts<'a>(&self, texts: impl IntoIterator<Item = &'a str>) -> Result<Vec<usize>> {
        let tokens: Vec<Vec<String>> = texts.into_iter().map(tokenize).collect();
        self.predict(&tokens)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut meta = serde_json::json!({
            "spec": self.spec,
            "scheme": self.scheme,
            "dev_accuracy": self.dev_accuracy,
        });
        let mut blocks: Vec<(String, Tensor)> = Vec::new();
        let linear = |model: &LinearModel, blocks: &mut Vec<(String, Tensor)>| -> Result<serde_json::Value> {
            blocks.push((
                "linear.weights".into(),
                Tensor::from_vec(&[model.num_classes(), model.num_features], model.weights.clone())?,
            ));
            blocks.push(("linear.bias".into(), Tensor::from_vec(&[model.num_classes()], model.bias.clone())?));
            Ok(serde_json::json!({ "lambda": model.lambda, "loss": model.loss }))
        };
        let table = |emb: &EmbeddingMatrix, blocks: &mut Vec<(String, Tensor)>| -> Result<serde_json::Value> {
            blocks.push(("embeddings".into(), Tensor::from_vec(&[emb.len(), emb.dim()], emb.data().to_vec())?));
            Ok(serde_json::json!({ "vocab": emb.vocab(), "oov_seed": emb.oov_seed() }))
        };
        meta["body"] = match &self.body {
            Body::Bow { vocab, model } => {
                serde_json::json!({ "type": "bow", "vocab": vocab, "linear": linear(model, &mut blocks)? })
            }
            Body::Mean { embeddings, model } => serde_json::json!({
                "type": "mean",
                "embeddings": table(embeddings, &mut blocks)?,
                "linear": linear(model, &mut blocks)?,
            }),
            Body::MinMaxAvg { embeddings, model } => serde_json::json!({
                "type": "minmaxavg",
                "embeddings": table(embeddings, &mut blocks)?,
                "linear": linear(model, &mut blocks)?,
            }),
            Body::Neural { vocab, oov_seed, net } => {
                for (name, p) in net.named_params() {
                    blocks.push((name, p.value.clone()));
                }
                let seq_len = match &net.encoder {
                    net::Encoder::Cnn { seq_len, .. } => *seq_len,
                    _ => 0,
                };
                serde_json::json!({
                    "type": "neural",
                    "vocab": vocab,
                    "oov_seed": oov_seed,
                    "seq_len": seq_len,
                })
            }
        };
        let mut ck = Checkpoint::new(meta);
        for (name, t) in blocks {
            ck.push(name, t);
        }
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let field = |v: &serde_json::Value, key: &str| -> Result<serde_json::Value> {
            v.get(key)
                .cloned()
                .ok_or_else(|| Error::Checkpoint(format!("metadata lacks {key:?}")))
        };
        let meta = &ck.metadata;
        let spec: ModelSpec = serde_json::from_value(field(meta, "spec")?)?;
        let scheme: LabelScheme = serde_json::from_value(field(meta, "scheme")?)?;
        let dev_accuracy: Option<f64> = serde_json::from_value(field(meta, "dev_accuracy")?)?;
        let body_meta = field(meta, "body")?;
        let linear = |v: &serde_json::Value| -> Result<LinearModel> {
            let w = ck.block("linear.weights")?;
            let b = ck.block("linear.bias")?;
            if w.shape().len() != 2 || w.shape()[0] != b.len() {
                return Err(Error::Checkpoint("inconsistent linear blocks".into()));
            }
            Ok(LinearModel {
                weights: w.data().to_vec(),
                bias: b.data().to_vec(),
                num_features: w.shape()[1],
                lambda: serde_json::from_value(field(v, "lambda")?)?,
                loss: serde_json::from_value(field(v, "loss")?)?,
            })
        };
        let table = |v: &serde_json::Value| -> Result<EmbeddingMatrix> {
            let vocab: Vocabulary = serde_json::from_value(field(v, "vocab")?)?;
            let seed: u64 = serde_json::from_value(field(v, "oov_seed")?)?;
            let t = ck.block("embeddings")?;
            let dim = t.shape().get(1).copied().unwrap_or(0);
            EmbeddingMatrix::new(vocab, dim, t.data().to_vec(), seed)
        };
        let kind: String = serde_json::from_value(field(&body_meta, "type")?)?;
        let body = match kind.as_str() {
            "bow" => Body::Bow {
                vocab: serde_json::from_value(field(&body_meta, "vocab")?)?,
                model: linear(&field(&body_meta, "linear")?)?,
            },
            "mean" => Body::Mean {
                embeddings: table(&field(&body_meta, "embeddings")?)?,
                model: linear(&field(&body_meta, "linear")?)?,
            },
            "minmaxavg" => Body::MinMaxAvg {
                embeddings: table(&field(&body_meta, "embeddings")?)?,
                model: linear(&field(&body_meta, "linear")?)?,
            },
            "neural" => {
                let vocab: Vocabulary = serde_json::from_value(field(&body_meta, "vocab")?)?;
                let oov_seed: u64 = serde_json::from_value(field(&body_meta, "oov_seed")?)?;
                let seq_len: usize = serde_json::from_value(field(&body_meta, "seq_len")?)?;
                let encoder = spec
                    .kind
                    .encoder()
                    .ok_or_else(|| Error::Checkpoint(format!("{} is not a neural kind", spec.kind)))?;
                let shape = NetShape {
                    encoder,
                    hidden: spec.hidden.ok_or_else(|| Error::Checkpoint("hidden size missing".into()))?,
                    classes: scheme.num_labels(),
                    dropout: spec.dropout,
                    recurrent: spec.recurrent,
                    filters: spec.filters,
                    seq_len,
                };
                let table = ck.block("embeddings")?.clone();
                let mut net = SentimentNet::new(table, &shape, &mut seeded(0))?;
                for (name, p) in net.named_params_mut() {
                    let stored = ck.block(&name)?;
                    if stored.shape() != p.value.shape() {
                        return Err(Error::Checkpoint(format!(
                            "block {name:?} has shape {:?}, expected {:?}",
                            stored.shape(),
                            p.value.shape()
                        )));
                    }
                    p.value = stored.clone();
                }
                Body::Neural { vocab, oov_seed, net }
            }
            other => return Err(Error::Checkpoint(format!("unknown model body {other:?}"))),
        };
        Ok(TrainedModel {
            spec,
            scheme,
            dev_accuracy,
            body,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Predictions for tokenized examples.
pub fn predict_labels(model: &TrainedModel, examples: &[Vec<String>]) -> Result<Vec<usize>> {
    model.predict(examples)
}

fn bow_matrix(examples: &[Vec<String>], vocab: &Vocabulary) -> Result<FeatureMatrix> {
    FeatureMatrix::sparse(vocab.len(), examples.iter().map(|t| bow_row(t, vocab)).collect())
}

fn dense_matrix(
    examples: &[Vec<String>],
    emb: &EmbeddingMatrix,
    f: fn(&[String], &EmbeddingMatrix) -> Result<Vec<f64>>,
) -> Result<FeatureMatrix> {
    FeatureMatrix::dense(examples.iter().map(|t| f(t, emb)).collect::<Result<_>>()?)
}

fn encode(tokens: &[String], vocab: &Vocabulary, oov_seed: u64, dim: usize) -> Result<Vec<Slot>> {
    if tokens.is_empty() {
        return Err(Error::invalid("cannot classify an empty example"));
    }
    Ok(tokens
        .iter()
        .map(|t| match vocab.get(t) {
            Some(r) => Slot::Row(r),
            None => Slot::Fixed(oov_vector(oov_seed, t, dim)),
        })
        .collect())
}

fn accuracy_of(pred: &[usize], gold: &[usize]) -> f64 {
    let hits = pred.iter().zip(gold).filter(|(a, b)| a == b).count();
    hits as f64 / gold.len().max(1) as f64
}

/// Trains `spec` on `data`, tuning whatever the spec leaves open on the
/// development split.
pub fn train_sentiment_model(spec: &ModelSpec, data: &DatasetSplit) -> Result<TrainedModel> {
    let embeddings = prepare_embeddings(spec, data)?;
    train_with_embeddings(spec, data, embeddings.as_ref())
}

/// Returns `spec` with every tuned hyperparameter fixed to its selected value.
pub fn tune_hyperparameters(spec: &ModelSpec, data: &DatasetSplit) -> Result<ModelSpec> {
    Ok(train_sentiment_model(spec, data)?.spec)
}

/// As [`train_sentiment_model`] with the word vectors already resolved by
/// [`prepare_embeddings`].
pub fn train_with_embeddings(
    spec: &ModelSpec,
    data: &DatasetSplit,
    embeddings: Option<&EmbeddingMatrix>,
) -> Result<TrainedModel> {
    spec.validate()?;
    if spec.kind != ModelKind::Bow && embeddings.is_none() {
        return Err(Error::invalid(format!("{} needs word vectors", spec.kind)));
    }
    let train = data.partition(Partition::Train);
    let dev = data.partition(Partition::Dev);
    let train_x = tokenized(train);
    let train_y = labels(train);
    let dev_x = tokenized(dev);
    let dev_y = labels(dev);
    let classes = data.scheme.num_labels();
    let mut spec = spec.clone();

    let linear = |spec: &mut ModelSpec, x: FeatureMatrix, dx: FeatureMatrix, loss: LossKind| -> Result<(LinearModel, Option<f64>)> {
        let config = LinearConfig {
            max_iterations: spec.linear_iterations,
            ..LinearConfig::default()
        };
        match spec.lambda {
            Some(lambda) => {
                let fit = match loss {
                    LossKind::Logistic => train_logreg(&x, &train_y, classes, lambda, &config)?,
                    LossKind::Hinge => train_svm(&x, &train_y, classes, lambda, &config)?,
                };
                Ok((fit.model, None))
            }
            None => {
                let (model, acc) = select_lambda((&x, &train_y), (&dx, &dev_y), classes, loss, &LAMBDA_GRID, &config)?;
                spec.lambda = Some(model.lambda);
                Ok((model, Some(acc)))
            }
        }
    };

    let (body, dev_accuracy) = match spec.kind {
        ModelKind::Bow => {
            let vocab = Vocabulary::build(train_x.iter(), 1)?;
            let (model, acc) = linear(
                &mut spec,
                bow_matrix(&train_x, &vocab)?,
                bow_matrix(&dev_x, &vocab)?,
                LossKind::Logistic,
            )?;
            (Body::Bow { vocab, model }, acc)
        }
        ModelKind::Ave | ModelKind::Retrofit => {
            let emb = embeddings.expect("checked above");
            let (model, acc) = linear(
                &mut spec,
                dense_matrix(&train_x, emb, ave_features)?,
                dense_matrix(&dev_x, emb, ave_features)?,
                LossKind::Logistic,
            )?;
            (
                Body::Mean {
                    embeddings: emb.clone(),
                    model,
                },
                acc,
            )
        }
        ModelKind::Joint => {
            let emb = embeddings.expect("checked above");
            let (model, acc) = linear(
                &mut spec,
                dense_matrix(&train_x, emb, minmaxavg_features)?,
                dense_matrix(&dev_x, emb, minmaxavg_features)?,
                LossKind::Hinge,
            )?;
            (
                Body::MinMaxAvg {
                    embeddings: emb.clone(),
                    model,
                },
                acc,
            )
        }
        ModelKind::Lstm | ModelKind::Bilstm | ModelKind::Cnn => {
            let emb = embeddings.expect("checked above");
            let setup = NeuralSetup::new(&spec, data, emb)?;
            let grid: Vec<usize> = match spec.hidden {
                Some(h) => vec![h],
                None => HIDDEN_GRID.to_vec(),
            };
            let mut fitted: BTreeMap<usize, (SentimentNet, f64, usize)> = BTreeMap::new();
            let best = tune_with(&grid, |h| {
                let (net, acc, epochs) = setup.fit(&spec, h, &dev_x, &dev_y)?;
                fitted.insert(h, (net, acc, epochs));
                Ok((acc, epochs))
            })?;
            let (net, acc, epochs) = fitted.remove(&best.hidden).expect("candidate was fitted");
            let tuned = spec.hidden.is_none() || spec.epochs.is_none();
            spec.hidden = Some(best.hidden);
            spec.epochs = Some(epochs);
            (
                Body::Neural {
                    vocab: setup.vocab,
                    oov_seed: emb.oov_seed(),
                    net,
                },
                tuned.then_some(acc),
            )
        }
    };
    Ok(TrainedModel {
        spec,
        scheme: data.scheme.clone(),
        dev_accuracy,
        body,
    })
}

/// Inputs shared by every hidden-size candidate of one neural training.
struct NeuralSetup {
    vocab: Vocabulary,
    table: Tensor,
    oov_seed: u64,
    train: Vec<(Vec<Slot>, usize)>,
    classes: usize,
    seq_len: usize,
}

impl NeuralSetup {
    fn new(spec: &ModelSpec, data: &DatasetSplit, emb: &EmbeddingMatrix) -> Result<Self> {
        if emb.dim() != spec.dim {
            return Err(Error::shape(format!("{}-d embeddings", spec.dim), format!("{}-d", emb.dim())));
        }
        // Token types of every partition (labels unused), so that test words
        // keep their pre-trained vectors inside the fine-tuned table.
        let all: Vec<Vec<String>> = data.texts().map(tokenize).collect();
        let vocab = Vocabulary::build(all.iter(), 1)?;
        let mut rows = Vec::with_capacity(vocab.len() * spec.dim);
        for w in vocab.words() {
            rows.extend_from_slice(&emb.lookup(w));
        }
        let table = Tensor::from_vec(&[vocab.len(), spec.dim], rows)?;
        let train: Vec<(Vec<Slot>, usize)> = data
            .partition(Partition::Train)
            .iter()
            .map(|e| Ok((encode(&tokenize(&e.text), &vocab, emb.oov_seed(), spec.dim)?, e.label)))
            .collect::<Result<_>>()?;
        let seq_len = train.iter().map(|(s, _)| s.len()).max().unwrap_or(1);
        Ok(NeuralSetup {
            vocab,
            table,
            oov_seed: emb.oov_seed(),
            train,
            classes: data.scheme.num_labels(),
            seq_len,
        })
    }

    fn dev_accuracy(&self, net: &SentimentNet, dev_x: &[Vec<String>], dev_y: &[usize]) -> Result<f64> {
        let mut rng = seeded(0);
        let mut pred = Vec::with_capacity(dev_x.len());
        for tokens in dev_x {
            let slots = encode(tokens, &self.vocab, self.oov_seed, net.dim())?;
            pred.push(argmax_logits(&net.forward(&slots, Mode::Inference, &mut rng)?.0));
        }
        Ok(accuracy_of(&pred, dev_y))
    }

    /// Trains one hidden size. With a fixed epoch count the final network is
    /// returned; otherwise the best dev snapshot under early stopping.
    fn fit(&self, spec: &ModelSpec, hidden: usize, dev_x: &[Vec<String>], dev_y: &[usize]) -> Result<(SentimentNet, f64, usize)> {
        let shape = NetShape {
            encoder: spec.kind.encoder().expect("neural kind"),
            hidden,
            classes: self.classes,
            dropout: spec.dropout,
            recurrent: spec.recurrent,
            filters: spec.filters,
            seq_len: self.seq_len,
        };
        let mut init_rng = seeded(derive_seed(spec.seed, &format!("init/{hidden}")));
        let mut net = SentimentNet::new(self.table.clone(), &shape, &mut init_rng)?;
        let mut rng = seeded(derive_seed(spec.seed, &format!("train/{hidden}")));
        let mut adam = Adam::new(spec.learning_rate);
        let mut row_adam = RowAdam::new(spec.learning_rate);
        let mut order: Vec<usize> = (0..self.train.len()).collect();

        let cap = spec.epochs.unwrap_or(spec.max_epochs);
        let mut best: Option<(SentimentNet, f64, usize)> = None;
        for epoch in 1..=cap {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for batch in order.chunks(spec.batch_size) {
                let weight = 1.0 / batch.len() as f64;
                let mut emb_grad = BTreeMap::new();
                for &i in batch {
                    let (slots, gold) = &self.train[i];
                    let (_, trace) = net.forward(slots, Mode::Train, &mut rng)?;
                    total += net.backward(&trace, *gold, weight, &mut emb_grad)?;
                }
                adam.step(&mut net.params_mut());
                for p in net.params_mut() {
                    p.zero_grad();
                }
                row_adam.step(&mut net.embeddings.value, &emb_grad);
            }
            log::debug!(
                "{} h={hidden} epoch {epoch}: train loss {:.4}",
                spec.kind,
                total / self.train.len() as f64
            );
            if spec.epochs.is_none() {
                let acc = self.dev_accuracy(&net, dev_x, dev_y)?;
                if best.as_ref().is_none_or(|(_, a, _)| acc > *a) {
                    best = Some((net.clone(), acc, epoch));
                } else if epoch - best.as_ref().map_or(0, |b| b.2) >= spec.patience {
                    break;
                }
            }
        }
        match best {
            Some(b) => Ok(b),
            None => {
                let acc = self.dev_accuracy(&net, dev_x, dev_y)?;
                Ok((net, acc, cap))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
            assert_eq!(k.name().to_lowercase().parse::<ModelKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.name()));
        }
        assert!("GRU".parse::<ModelKind>().is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::new(ModelKind::Bow, 50).validate().is_ok());
        assert!(ModelSpec::new(ModelKind::Ave, 50).validate().is_err());
        let mut r = ModelSpec::new(ModelKind::Retrofit, 50);
        r.embeddings = Some(EmbeddingSource::File("e.txt".into()));
        assert!(r.validate().is_err());
        r.lexicon = Some("l.txt".into());
        assert!(r.validate().is_ok());
        assert!(ModelSpec::new(ModelKind::Joint, 50).validate().is_err());
    }

    #[test]
    fn selection_rules() {
        let c = |hidden, epochs, dev_accuracy| Candidate {
            hidden,
            epochs,
            dev_accuracy,
        };
        assert_eq!(select_configuration(&[c(50, 3, 0.4)]), Some(0));
        assert_eq!(select_configuration(&[c(50, 3, 0.4), c(100, 2, 0.6), c(200, 1, 0.5)]), Some(1));
        assert_eq!(select_configuration(&[c(200, 1, 0.5), c(50, 9, 0.5), c(50, 4, 0.5)]), Some(2));
        assert_eq!(select_configuration(&[]), None);
        let best = tune_with(&HIDDEN_GRID, |h| Ok((if h == 100 { 0.9 } else { 0.3 }, 7))).unwrap();
        assert_eq!(best.hidden, 100);
    }
}
