//! Flat `key = value` benchmark configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use sentibench::benchmark::BenchmarkPlan;
use sentibench::data::{infer_scheme, load_dataset, sst_to_binary, DatasetSplit, LabelScheme};
use sentibench::embeddings::SkipgramConfig;
use sentibench::eval::RANDOMIZATION_ITERATIONS;
use sentibench::models::{EmbeddingSource, ModelKind, ModelSpec};

/// Every accepted key: pattern, default, description. Shown by `--help`.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("dataset.<name>", "-", "dataset directory with train.tsv, dev.tsv, test.tsv"),
    ("labels.<name>", "inferred", "number of labels of a dataset"),
    ("binary_of.<name>", "-", "derive <name> from a 5-label dataset by dropping neutral examples"),
    ("data_root", "$SENTIBENCH_DATA or the config directory", "base for relative dataset paths"),
    ("models", "BOW,AVE,RETROFIT,JOINT,LSTM,BILSTM,CNN", "model kinds to train"),
    ("dims", "50,100,200,300,600", "embedding dimensions"),
    ("seeds", "1,2,3,4,5", "seeds for neural models (at least five); others use the first"),
    ("embeddings.<dim>", "skipgram", "word vector file for <dim>, or `skipgram` to train on each dataset"),
    ("lexicon", "-", "synonym lexicon for RETROFIT (word pairs per line)"),
    ("joint_corpus", "-", "emoticon-marked corpus for JOINT (one text per line)"),
    ("chi2_reference", "-", "dataset the others are compared to in the emoticon test"),
    ("out", "results", "output directory"),
    ("jobs", "1", "worker threads"),
    ("significance_iterations", "10000", "randomization test iterations"),
    ("significance_seed", "1", "seed of the randomization tests"),
    ("skipgram.<param>", "see below", "window, negatives, subsample, iterations, learning_rate, min_count, seed"),
    ("model.<param>", "-", "hyperparameter for every model kind"),
    ("<kind>.<param>", "-", "hyperparameter for one kind, e.g. `lstm.hidden = 100`"),
];

/// Hyperparameters accepted after `model.` or `<kind>.`; unset tunable ones
/// (hidden, epochs, lambda) are selected on the dev split.
pub const MODEL_PARAMS: &[&str] = &[
    "hidden",
    "epochs",
    "lambda",
    "max_epochs",
    "patience",
    "dropout",
    "learning_rate",
    "batch_size",
    "recurrent",
    "filters",
    "linear_iterations",
    "retrofit_iterations",
    "joint_alpha",
    "joint_window",
    "joint_hidden",
    "joint_epochs",
    "joint_learning_rate",
    "joint_min_count",
    "joint_seed",
];

const SKIPGRAM_PARAMS: &[&str] = &["window", "negatives", "subsample", "iterations", "learning_rate", "min_count", "seed"];

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Dir(PathBuf),
    BinaryOf(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub name: String,
    pub source: DatasetSource,
    pub labels: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum VectorSource {
    File(PathBuf),
    Skipgram,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub datasets: Vec<DatasetEntry>,
    pub data_root: Option<PathBuf>,
    pub models: Vec<ModelKind>,
    pub dims: Vec<usize>,
    pub seeds: Vec<u64>,
    pub embeddings: BTreeMap<usize, VectorSource>,
    pub lexicon: Option<PathBuf>,
    pub joint_corpus: Option<PathBuf>,
    pub chi2_reference: Option<String>,
    pub out: PathBuf,
    pub jobs: usize,
    pub significance_iterations: usize,
    pub significance_seed: u64,
    /// Raw `skipgram.*` values.
    pub skipgram: BTreeMap<String, String>,
    /// Raw `model.*` and `<kind>.*` values keyed by scope then parameter.
    pub overrides: BTreeMap<String, BTreeMap<String, String>>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            datasets: Vec::new(),
            data_root: None,
            models: ModelKind::ALL.to_vec(),
            dims: vec![50, 100, 200, 300, 600],
            seeds: vec![1, 2, 3, 4, 5],
            embeddings: BTreeMap::new(),
            lexicon: None,
            joint_corpus: None,
            chi2_reference: None,
            out: PathBuf::from("results"),
            jobs: 1,
            significance_iterations: RANDOMIZATION_ITERATIONS,
            significance_seed: 1,
            skipgram: BTreeMap::new(),
            overrides: BTreeMap::new(),
        }
    }
}

fn list<T: FromStr>(value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| anyhow!("{s:?}: {e}")))
        .collect()
}

fn scalar<T: FromStr>(value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| anyhow!("{value:?}: {e}"))
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

impl BenchConfig {
    /// Parses the text of a config file. Errors name the line and key.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = BenchConfig::default();
        let mut seen = BTreeMap::new();
        let mut order: Vec<String> = Vec::new();
        let mut dirs: BTreeMap<String, DatasetSource> = BTreeMap::new();
        let mut labels: BTreeMap<String, usize> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| anyhow!("line {line_no}: expected `key = value`, found {line:?}"))?;
            if key.is_empty() {
                bail!("line {line_no}: missing key");
            }
            if let Some(prev) = seen.insert(key.to_string(), line_no) {
                bail!("line {line_no}: key `{key}` already set on line {prev}");
            }
            cfg.apply(key, value, &mut dirs, &mut labels, &mut order)
                .with_context(|| format!("line {line_no}: key `{key}`"))?;
        }
        for name in &order {
            cfg.datasets.push(DatasetEntry {
                name: name.clone(),
                source: dirs[name].clone(),
                labels: labels.remove(name),
            });
        }
        if let Some(name) = labels.keys().next() {
            bail!("key `labels.{name}`: no dataset named {name:?}");
        }
        Ok(cfg)
    }

    fn apply(
        &mut self,
        key: &str,
        value: &str,
        dirs: &mut BTreeMap<String, DatasetSource>,
        labels: &mut BTreeMap<String, usize>,
        order: &mut Vec<String>,
    ) -> Result<()> {
        if value.is_empty() {
            bail!("empty value");
        }
        let (head, rest) = match key.split_once('.') {
            Some((h, r)) => (h, Some(r)),
            None => (key, None),
        };
        match (head, rest) {
            ("dataset" | "binary_of", Some(name)) => {
                if !valid_name(name) {
                    bail!("invalid dataset name {name:?}");
                }
                if dirs.contains_key(name) {
                    bail!("dataset {name:?} defined twice");
                }
                let source = if head == "dataset" {
                    DatasetSource::Dir(PathBuf::from(value))
                } else {
                    DatasetSource::BinaryOf(value.to_string())
                };
                dirs.insert(name.to_string(), source);
                order.push(name.to_string());
            }
            ("labels", Some(name)) => {
                labels.insert(name.to_string(), scalar(value)?);
            }
            ("data_root", None) => self.data_root = Some(PathBuf::from(value)),
            ("models", None) => self.models = list(value)?,
            ("dims", None) => self.dims = list(value)?,
            ("seeds", None) => self.seeds = list(value)?,
            ("embeddings", Some(dim)) => {
                let dim: usize = scalar(dim)?;
                let source = if value.eq_ignore_ascii_case("skipgram") {
                    VectorSource::Skipgram
                } else {
                    VectorSource::File(PathBuf::from(value))
                };
                self.embeddings.insert(dim, source);
            }
            ("lexicon", None) => self.lexicon = Some(PathBuf::from(value)),
            ("joint_corpus", None) => self.joint_corpus = Some(PathBuf::from(value)),
            ("chi2_reference", None) => self.chi2_reference = Some(value.to_string()),
            ("out", None) => self.out = PathBuf::from(value),
            ("jobs", None) => self.jobs = scalar(value)?,
            ("significance_iterations", None) => self.significance_iterations = scalar(value)?,
            ("significance_seed", None) => self.significance_seed = scalar(value)?,
            ("skipgram", Some(param)) => {
                if !SKIPGRAM_PARAMS.contains(&param) {
                    bail!("unknown key (skip-gram parameters: {})", SKIPGRAM_PARAMS.join(", "));
                }
                let mut probe = SkipgramConfig::default();
                set_skipgram(&mut probe, param, value)?;
                self.skipgram.insert(param.to_string(), value.to_string());
            }
            (scope, Some(param)) if scope == "model" || ModelKind::from_str(scope).is_ok() => {
                if !MODEL_PARAMS.contains(&param) {
                    bail!("unknown key (model parameters: {})", MODEL_PARAMS.join(", "));
                }
                let mut probe = ModelSpec::new(ModelKind::Lstm, 1);
                set_model_param(&mut probe, param, value)?;
                let scope = if scope == "model" { "model".to_string() } else { scope.to_ascii_lowercase() };
                if self.overrides.get(&scope).is_some_and(|m| m.contains_key(param)) {
                    bail!("parameter set twice for {scope}");
                }
                self.overrides.entry(scope).or_default().insert(param.to_string(), value.to_string());
            }
            _ => bail!("unknown key"),
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Canonical text form; parsing it yields an equal config.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for d in &self.datasets {
            match &d.source {
                DatasetSource::Dir(p) => writeln!(out, "dataset.{} = {}", d.name, p.display()),
                DatasetSource::BinaryOf(src) => writeln!(out, "binary_of.{} = {src}", d.name),
            }
            .unwrap();
            if let Some(l) = d.labels {
                writeln!(out, "labels.{} = {l}", d.name).unwrap();
            }
        }
        if let Some(root) = &self.data_root {
            writeln!(out, "data_root = {}", root.display()).unwrap();
        }
        writeln!(out, "models = {}", join(&self.models)).unwrap();
        writeln!(out, "dims = {}", join(&self.dims)).unwrap();
        writeln!(out, "seeds = {}", join(&self.seeds)).unwrap();
        for (dim, src) in &self.embeddings {
            match src {
                VectorSource::File(p) => writeln!(out, "embeddings.{dim} = {}", p.display()),
                VectorSource::Skipgram => writeln!(out, "embeddings.{dim} = skipgram"),
            }
            .unwrap();
        }
        if let Some(p) = &self.lexicon {
            writeln!(out, "lexicon = {}", p.display()).unwrap();
        }
        if let Some(p) = &self.joint_corpus {
            writeln!(out, "joint_corpus = {}", p.display()).unwrap();
        }
        if let Some(r) = &self.chi2_reference {
            writeln!(out, "chi2_reference = {r}").unwrap();
        }
        writeln!(out, "out = {}", self.out.display()).unwrap();
        writeln!(out, "jobs = {}", self.jobs).unwrap();
        writeln!(out, "significance_iterations = {}", self.significance_iterations).unwrap();
        writeln!(out, "significance_seed = {}", self.significance_seed).unwrap();
        for (k, v) in &self.skipgram {
            writeln!(out, "skipgram.{k} = {v}").unwrap();
        }
        for (scope, params) in &self.overrides {
            for (k, v) in params {
                writeln!(out, "{scope}.{k} = {v}").unwrap();
            }
        }
        out
    }

    /// Checks everything that can be checked without training: structure,
    /// referenced names and the existence of every referenced path.
    pub fn validate(&self, base: &Path) -> Result<()> {
        if self.datasets.is_empty() {
            bail!("missing required key `dataset.<name>`");
        }
        if self.models.is_empty() || self.dims.is_empty() {
            bail!("`models` and `dims` must not be empty");
        }
        if self.jobs == 0 {
            bail!("`jobs` must be at least 1");
        }
        if self.significance_iterations == 0 {
            bail!("`significance_iterations` must be positive");
        }
        for (what, mut items) in [
            ("models", self.models.iter().map(|m| m.to_string()).collect::<Vec<_>>()),
            ("dims", self.dims.iter().map(|d| d.to_string()).collect()),
            ("seeds", self.seeds.iter().map(|s| s.to_string()).collect()),
        ] {
            items.sort();
            if items.windows(2).any(|w| w[0] == w[1]) {
                bail!("`{what}` contains duplicates");
            }
        }
        if self.models.iter().any(|m| m.is_neural()) && self.seeds.len() < 5 {
            bail!("`seeds` needs at least 5 entries when neural models are run (found {})", self.seeds.len());
        }
        if self.seeds.is_empty() {
            bail!("`seeds` must not be empty");
        }
        let names: Vec<&str> = self.datasets.iter().map(|d| d.name.as_str()).collect();
        for d in &self.datasets {
            match &d.source {
                DatasetSource::Dir(p) => {
                    let dir = self.dataset_path(base, p);
                    if !dir.is_dir() {
                        bail!("key `dataset.{}`: directory {} does not exist", d.name, dir.display());
                    }
                }
                DatasetSource::BinaryOf(src) => {
                    let Some(parent) = self.datasets.iter().find(|e| &e.name == src) else {
                        bail!("key `binary_of.{}`: no dataset named {src:?}", d.name);
                    };
                    if !matches!(parent.source, DatasetSource::Dir(_)) {
                        bail!("key `binary_of.{}`: {src:?} must be a directory dataset", d.name);
                    }
                }
            }
        }
        if let Some(r) = &self.chi2_reference {
            if !names.contains(&r.as_str()) {
                bail!("key `chi2_reference`: no dataset named {r:?}");
            }
        }
        let needs_base = self.models.iter().any(|m| m.needs_base_embeddings());
        for dim in &self.dims {
            if let Some(VectorSource::File(p)) = self.embeddings.get(dim) {
                if needs_base && !resolve(base, p).is_file() {
                    bail!("key `embeddings.{dim}`: file {} does not exist", resolve(base, p).display());
                }
            }
        }
        for (key, path, kind) in [
            ("lexicon", &self.lexicon, ModelKind::Retrofit),
            ("joint_corpus", &self.joint_corpus, ModelKind::Joint),
        ] {
            if self.models.contains(&kind) {
                match path {
                    None => bail!("missing required key `{key}` for {kind}"),
                    Some(p) if !resolve(base, p).is_file() => {
                        bail!("key `{key}`: file {} does not exist", resolve(base, p).display())
                    }
                    _ => {}
                }
            }
        }
        for &kind in &self.models {
            let mut spec = self.model_spec(kind, self.dims[0], base)?;
            spec.embeddings = Some(self.embedding_source(self.dims[0], base)?);
            spec.validate().map_err(|e| anyhow!("{kind}: {e}"))?;
        }
        Ok(())
    }

    fn dataset_path(&self, base: &Path, p: &Path) -> PathBuf {
        if p.is_absolute() {
            return p.to_path_buf();
        }
        let root = match &self.data_root {
            Some(r) => resolve(base, r),
            None => std::env::var_os("SENTIBENCH_DATA").map(PathBuf::from).unwrap_or_else(|| base.to_path_buf()),
        };
        root.join(p)
    }

    pub fn skipgram_config(&self) -> Result<SkipgramConfig> {
        let mut cfg = SkipgramConfig::default();
        for (k, v) in &self.skipgram {
            set_skipgram(&mut cfg, k, v)?;
        }
        Ok(cfg)
    }

    fn embedding_source(&self, dim: usize, base: &Path) -> Result<EmbeddingSource> {
        Ok(match self.embeddings.get(&dim) {
            Some(VectorSource::File(p)) => EmbeddingSource::File(resolve(base, p)),
            Some(VectorSource::Skipgram) | None => EmbeddingSource::Skipgram(SkipgramConfig { dim, ..self.skipgram_config()? }),
        })
    }

    /// The spec template for `kind`: `model.*` overrides first, then the
    /// kind's own.
    pub fn model_spec(&self, kind: ModelKind, dim: usize, base: &Path) -> Result<ModelSpec> {
        let mut spec = ModelSpec::new(kind, dim);
        spec.lexicon = self.lexicon.as_ref().map(|p| resolve(base, p));
        spec.joint_corpus = self.joint_corpus.as_ref().map(|p| resolve(base, p));
        for scope in ["model".to_string(), kind.name().to_ascii_lowercase()] {
            for (k, v) in self.overrides.get(&scope).into_iter().flatten() {
                set_model_param(&mut spec, k, v).with_context(|| format!("key `{scope}.{k}`"))?;
            }
        }
        Ok(spec)
    }

    pub fn load_datasets(&self, base: &Path) -> Result<Vec<DatasetSplit>> {
        let mut loaded: BTreeMap<String, DatasetSplit> = BTreeMap::new();
        let mut out = Vec::new();
        for d in self.datasets.iter().filter(|d| matches!(d.source, DatasetSource::Dir(_))) {
            let DatasetSource::Dir(p) = &d.source else { unreachable!() };
            let dir = self.dataset_path(base, p);
            let scheme = match d.labels {
                Some(n) => LabelScheme::with_labels(n)?,
                None => infer_scheme(&dir)?,
            };
            let mut split = load_dataset(&dir, scheme).with_context(|| format!("dataset {}", d.name))?;
            split.name = d.name.clone();
            loaded.insert(d.name.clone(), split);
        }
        for d in &self.datasets {
            match &d.source {
                DatasetSource::Dir(_) => out.push(loaded[&d.name].clone()),
                DatasetSource::BinaryOf(src) => {
                    let mut split = sst_to_binary(&loaded[src]).with_context(|| format!("dataset {}", d.name))?;
                    split.name = d.name.clone();
                    out.push(split);
                }
            }
        }
        Ok(out)
    }

    /// Loads the datasets and assembles the plan.
    pub fn plan(&self, base: &Path, cache_dir: Option<PathBuf>) -> Result<BenchmarkPlan> {
        self.validate(base)?;
        let embeddings = self
            .dims
            .iter()
            .map(|&dim| Ok((dim, self.embedding_source(dim, base)?)))
            .collect::<Result<_>>()?;
        let models = self
            .models
            .iter()
            .map(|&k| self.model_spec(k, self.dims[0], base))
            .collect::<Result<_>>()?;
        Ok(BenchmarkPlan {
            datasets: self.load_datasets(base)?,
            models,
            dims: self.dims.clone(),
            embeddings,
            seeds: self.seeds.clone(),
            jobs: self.jobs,
            significance_iterations: self.significance_iterations,
            significance_seed: self.significance_seed,
            chi2_reference: self.chi2_reference.clone(),
            cache_dir,
        })
    }
}

/// Relative paths are taken relative to `base`.
pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn set_skipgram(cfg: &mut SkipgramConfig, param: &str, value: &str) -> Result<()> {
    match param {
        "window" => cfg.window = scalar(value)?,
        "negatives" => cfg.negatives = scalar(value)?,
        "subsample" => cfg.subsample = scalar(value)?,
        "iterations" => cfg.iterations = scalar(value)?,
        "learning_rate" => cfg.learning_rate = scalar(value)?,
        "min_count" => cfg.min_count = scalar(value)?,
        "seed" => cfg.seed = scalar(value)?,
        _ => bail!("unknown skip-gram parameter {param:?}"),
    }
    Ok(())
}

fn set_model_param(spec: &mut ModelSpec, param: &str, value: &str) -> Result<()> {
    match param {
        "hidden" => spec.hidden = Some(scalar(value)?),
        "epochs" => spec.epochs = Some(scalar(value)?),
        "lambda" => spec.lambda = Some(scalar(value)?),
        "max_epochs" => spec.max_epochs = scalar(value)?,
        "patience" => spec.patience = scalar(value)?,
        "dropout" => spec.dropout = scalar(value)?,
        "learning_rate" => spec.learning_rate = scalar(value)?,
        "batch_size" => spec.batch_size = scalar(value)?,
        "recurrent" => spec.recurrent = scalar(value)?,
        "filters" => spec.filters = scalar(value)?,
        "linear_iterations" => spec.linear_iterations = scalar(value)?,
        "retrofit_iterations" => spec.retrofit_iterations = scalar(value)?,
        "joint_alpha" => spec.joint.alpha = scalar(value)?,
        "joint_window" => spec.joint.window = scalar(value)?,
        "joint_hidden" => spec.joint.hidden = scalar(value)?,
        "joint_epochs" => spec.joint.epochs = scalar(value)?,
        "joint_learning_rate" => spec.joint.learning_rate = scalar(value)?,
        "joint_min_count" => spec.joint.min_count = scalar(value)?,
        "joint_seed" => spec.joint.seed = scalar(value)?,
        _ => bail!("unknown model parameter {param:?}"),
    }
    Ok(())
}

/// The key table as printed under `--help`.
pub fn keys_help() -> String {
    let mut out = String::from("Config keys (`key = value`, `#` starts a comment):\n");
    for (key, default, help) in KEYS {
        let _ = writeln!(out, "  {key:<26} {help} [default: {default}]");
    }
    let _ = writeln!(out, "\nModel parameters: {}", MODEL_PARAMS.join(", "));
    let _ = writeln!(
        out,
        "Defaults: max_epochs 30, patience 5, dropout 0.5, learning_rate 0.001, batch_size 32, recurrent 50, filters 50,\n\
         linear_iterations 500, retrofit_iterations 10, joint_alpha 0.5, joint_window 3, joint_hidden 20, joint_epochs 5,\n\
         joint_learning_rate 0.1; hidden is tuned over 50,100,200, epochs by early stopping, lambda over 1e-4..1."
    );
    let d = SkipgramConfig::default();
    let _ = writeln!(
        out,
        "Skip-gram defaults: window {}, negatives {}, subsample {}, iterations {}, learning_rate {}, min_count {}, seed {}",
        d.window, d.negatives, d.subsample, d.iterations, d.learning_rate, d.min_count, d.seed
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("d")).unwrap();
        let cfg = BenchConfig::parse("dataset.d = d\nmodels = BOW\n").unwrap();
        cfg.validate(dir.path()).unwrap();
    }

    #[test]
    fn unknown_keys_are_named_with_their_line() {
        let err = BenchConfig::parse("# comment\n\nunknown_key = 1\n").unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("line 3") && msg.contains("unknown_key"), "{msg}");
        let err = format!("{:#}", BenchConfig::parse("lstm.colour = red").unwrap_err());
        assert!(err.contains("lstm.colour"), "{err}");
        assert!(BenchConfig::parse("models BOW").is_err());
        assert!(BenchConfig::parse("jobs = 1\njobs = 2").is_err());
        assert!(BenchConfig::parse("model.hidden = many").is_err());
    }

    #[test]
    fn overrides_apply_in_scope_order() {
        let cfg = BenchConfig::parse("model.dropout = 0.2\nlstm.dropout = 0.3\nmodel.hidden = 64").unwrap();
        let base = Path::new(".");
        let lstm = cfg.model_spec(ModelKind::Lstm, 50, base).unwrap();
        let cnn = cfg.model_spec(ModelKind::Cnn, 50, base).unwrap();
        assert_eq!((lstm.dropout, lstm.hidden), (0.3, Some(64)));
        assert_eq!(cnn.dropout, 0.2);
    }

    #[test]
    fn neural_models_need_five_seeds() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("d")).unwrap();
        let cfg = BenchConfig::parse("dataset.d = d\nmodels = CNN\nseeds = 1, 2\n").unwrap();
        assert!(format!("{:#}", cfg.validate(dir.path()).unwrap_err()).contains("seeds"));
    }
}
