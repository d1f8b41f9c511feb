//! Benchmark orchestration: every (model, dimension, dataset) cell, five
//! seeds for the neural kinds, pairwise significance and the emoticon χ²
//! table, assembled into one deterministic report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{tokenize, DatasetSplit, Partition};
use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::eval::{accuracy, chi_squared_emoticons, confusion_matrix, macro_average, mean_std, runs_significance, test_gold, ChiSquared};
use crate::models::{prepare_embeddings, train_with_embeddings, EmbeddingSource, ModelKind, ModelSpec};
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone)]
pub struct BenchmarkPlan {
    pub datasets: Vec<DatasetSplit>,
    /// One template per model kind; `dim` and `seed` are filled per cell.
    pub models: Vec<ModelSpec>,
    pub dims: Vec<usize>,
    /// Base embedding source per dimension, used when a template has none.
    pub embeddings: BTreeMap<usize, EmbeddingSource>,
    pub seeds: Vec<u64>,
    pub jobs: usize,
    pub significance_iterations: usize,
    pub significance_seed: u64,
    /// Dataset every other dataset is compared against in the χ² table.
    pub chi2_reference: Option<String>,
    /// Directory for per-run results, reused by resumed runs.
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub kind: ModelKind,
    pub dim: usize,
    pub dataset: String,
    pub seed: u64,
    pub accuracy: f64,
    pub dev_accuracy: Option<f64>,
    pub predictions: Vec<usize>,
    /// The spec after dev tuning.
    pub spec: ModelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub dataset: String,
    pub kind: ModelKind,
    pub dim: usize,
    /// `None` when every run succeeded.
    pub error: Option<String>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub runs: Vec<RunResult>,
    /// Summed over runs.
    pub confusion: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub labels: Vec<String>,
    pub gold: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroRow {
    pub kind: ModelKind,
    pub dim: usize,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSignificance {
    pub dataset: String,
    pub dim: usize,
    pub a: ModelKind,
    pub b: ModelKind,
    pub p_values: Vec<f64>,
    pub verdict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiRow {
    pub reference: String,
    pub dataset: String,
    pub result: Option<ChiSquared>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub datasets: Vec<DatasetSummary>,
    pub cells: Vec<CellReport>,
    pub macro_averages: Vec<MacroRow>,
    pub significance: Vec<PairSignificance>,
    pub chi_squared: Vec<ChiRow>,
}

impl BenchmarkPlan {
    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() || self.models.is_empty() || self.dims.is_empty() {
            return Err(Error::invalid("a benchmark needs datasets, models and dims"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("a benchmark needs at least one seed"));
        }
        let mut names: Vec<&str> = self.datasets.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("dataset names must be unique"));
        }
        let mut kinds: Vec<ModelKind> = self.models.iter().map(|m| m.kind).collect();
        kinds.sort_unstable();
        if kinds.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("each model kind may appear once"));
        }
        for dim in &self.dims {
            for m in &self.models {
                self.cell_spec(m, *dim, self.seeds[0]).validate()?;
            }
        }
        Ok(())
    }

    fn cell_spec(&self, template: &ModelSpec, dim: usize, seed: u64) -> ModelSpec {
        let mut spec = template.clone();
        spec.dim = dim;
        spec.seed = seed;
        if spec.embeddings.is_none() && spec.kind.needs_base_embeddings() {
            spec.embeddings = self.embeddings.get(&dim).cloned();
        }
        spec
    }

    fn seeds_for(&self, kind: ModelKind) -> &[u64] {
        if kind.is_neural() {
            &self.seeds
        } else {
            &self.seeds[..1]
        }
    }
}

/// What an embedding preparation depends on; specs with equal keys share it.
#[derive(Serialize)]
struct EmbeddingKey<'a> {
    class: &'static str,
    dim: usize,
    dataset: Option<&'a str>,
    source: Option<&'a EmbeddingSource>,
    lexicon: Option<&'a PathBuf>,
    retrofit_iterations: Option<usize>,
    joint: Option<(&'a PathBuf, &'a crate::joint::JointConfig)>,
}

fn embedding_key(spec: &ModelSpec, dataset: &str) -> Option<String> {
    let trained_on_data = matches!(spec.embeddings, Some(EmbeddingSource::Skipgram(_)));
    let dataset = trained_on_data.then_some(dataset);
    let key = match spec.kind {
        ModelKind::Bow => return None,
        ModelKind::Joint => EmbeddingKey {
            class: "joint",
            dim: spec.dim,
            dataset: None,
            source: None,
            lexicon: None,
            retrofit_iterations: None,
            joint: spec.joint_corpus.as_ref().map(|p| (p, &spec.joint)),
        },
        ModelKind::Retrofit => EmbeddingKey {
            class: "retrofit",
            dim: spec.dim,
            dataset,
            source: spec.embeddings.as_ref(),
            lexicon: spec.lexicon.as_ref(),
            retrofit_iterations: Some(spec.retrofit_iterations),
            joint: None,
        },
        _ => EmbeddingKey {
            class: "base",
            dim: spec.dim,
            dataset,
            source: spec.embeddings.as_ref(),
            lexicon: None,
            retrofit_iterations: None,
            joint: None,
        },
    };
    Some(serde_json::to_string(&key).expect("serializable key"))
}

#[derive(Debug, Clone)]
struct Task {
    dataset: usize,
    spec: ModelSpec,
}

fn run_file(dir: &Path, t: &Task, name: &str) -> PathBuf {
    dir.join("runs")
        .join(format!("{name}__{}__{}__{}.json", t.spec.kind, t.spec.dim, t.spec.seed))
}

/// Trains and evaluates every cell of the plan. Failing cells are recorded
/// in the report rather than aborting the run.
pub fn run_benchmark(plan: &BenchmarkPlan) -> Result<BenchmarkReport> {
    plan.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot build worker pool: {e}")))?;

    // BOW ignores the dimension: it is trained at the first one and copied.
    let first_dim = plan.dims[0];
    let mut tasks = Vec::new();
    for (di, _) in plan.datasets.iter().enumerate() {
        for template in &plan.models {
            for &dim in &plan.dims {
                if template.kind == ModelKind::Bow && dim != first_dim {
                    continue;
                }
                for &seed in plan.seeds_for(template.kind) {
                    tasks.push(Task {
                        dataset: di,
                        spec: plan.cell_spec(template, dim, seed),
                    });
                }
            }
        }
    }

    let mut cached: BTreeMap<usize, RunResult> = BTreeMap::new();
    if let Some(dir) = &plan.cache_dir {
        for (i, t) in tasks.iter().enumerate() {
            let path = run_file(dir, t, &plan.datasets[t.dataset].name);
            if let Ok(text) = fs::read_to_string(&path) {
                match serde_json::from_str::<RunResult>(&text) {
                    Ok(r) => {
                        cached.insert(i, r);
                    }
                    Err(e) => log::warn!("ignoring unreadable cached run {}: {e}", path.display()),
                }
            }
        }
        if !cached.is_empty() {
            log::info!("resuming: {} of {} runs cached", cached.len(), tasks.len());
        }
    }

    let mut needed: BTreeMap<String, (usize, ModelSpec)> = BTreeMap::new();
    for (i, t) in tasks.iter().enumerate() {
        if cached.contains_key(&i) {
            continue;
        }
        if let Some(key) = embedding_key(&t.spec, &plan.datasets[t.dataset].name) {
            needed.entry(key).or_insert((t.dataset, t.spec.clone()));
        }
    }
    let prepared: BTreeMap<String, std::result::Result<Arc<EmbeddingMatrix>, String>> = pool.install(|| {
        needed
            .par_iter()
            .map(|(key, (di, spec))| {
                let res = prepare_embeddings(spec, &plan.datasets[*di])
                    .and_then(|e| e.ok_or_else(|| Error::invalid("no embeddings produced")))
                    .map(Arc::new)
                    .map_err(|e| e.to_string());
                if let Err(e) = &res {
                    log::error!("embeddings for {} at dim {} failed: {e}", spec.kind, spec.dim);
                }
                (key.clone(), res)
            })
            .collect()
    });

    let outcomes: Vec<std::result::Result<RunResult, String>> = pool.install(|| {
        tasks
            .par_iter()
            .enumerate()
            .map(|(i, t)| {
                if let Some(r) = cached.get(&i) {
                    return Ok(r.clone());
                }
                let data = &plan.datasets[t.dataset];
                let emb = match embedding_key(&t.spec, &data.name) {
                    Some(key) => Some(prepared[&key].clone()?),
                    None => None,
                };
                let result = run_one(&t.spec, data, emb.as_deref()).map_err(|e| e.to_string());
                match &result {
                    Ok(r) => {
                        log::info!("{} {} dim {} seed {}: accuracy {:.4}", data.name, t.spec.kind, t.spec.dim, t.spec.seed, r.accuracy);
                        if let Some(dir) = &plan.cache_dir {
                            if let Err(e) = store_run(&run_file(dir, t, &data.name), r) {
                                log::warn!("could not cache run: {e}");
                            }
                        }
                    }
                    Err(e) => log::error!("{} {} dim {} seed {} failed: {e}", data.name, t.spec.kind, t.spec.dim, t.spec.seed),
                }
                result
            })
            .collect()
    });

    let mut grouped: BTreeMap<(usize, ModelKind, usize), Vec<std::result::Result<RunResult, String>>> = BTreeMap::new();
    for (t, outcome) in tasks.iter().zip(outcomes) {
        grouped.entry((t.dataset, t.spec.kind, t.spec.dim)).or_default().push(outcome);
    }
    let mut cells = Vec::new();
    for (di, data) in plan.datasets.iter().enumerate() {
        let gold = test_gold(data);
        let classes = data.scheme.num_labels();
        for template in &plan.models {
            for &dim in &plan.dims {
                let source_dim = if template.kind == ModelKind::Bow { first_dim } else { dim };
                let outcomes = &grouped[&(di, template.kind, source_dim)];
                cells.push(assemble_cell(data, template.kind, dim, outcomes, &gold, classes));
            }
        }
    }

    let datasets: Vec<DatasetSummary> = plan
        .datasets
        .iter()
        .map(|d| DatasetSummary {
            name: d.name.clone(),
            labels: d.scheme.names().to_vec(),
            gold: test_gold(d),
        })
        .collect();

    let mut macro_averages = Vec::new();
    for template in &plan.models {
        for &dim in &plan.dims {
            let per: Vec<Option<f64>> = plan
                .datasets
                .iter()
                .map(|d| {
                    cells
                        .iter()
                        .find(|c| c.dataset == d.name && c.kind == template.kind && c.dim == dim)
                        .and_then(|c| c.mean)
                })
                .collect();
            macro_averages.push(MacroRow {
                kind: template.kind,
                dim,
                value: macro_average(&per).ok(),
            });
        }
    }

    let significance = pool.install(|| significance_table(&cells, &datasets, plan.significance_iterations, plan.significance_seed));
    let chi_squared = chi_table(plan);
    Ok(BenchmarkReport {
        datasets,
        cells,
        macro_averages,
        significance,
        chi_squared,
    })
}

fn run_one(spec: &ModelSpec, data: &DatasetSplit, emb: Option<&EmbeddingMatrix>) -> Result<RunResult> {
    let model = train_with_embeddings(spec, data, emb)?;
    let test: Vec<Vec<String>> = data.partition(Partition::Test).iter().map(|e| tokenize(&e.text)).collect();
    let predictions = model.predict(&test)?;
    Ok(RunResult {
        kind: spec.kind,
        dim: spec.dim,
        dataset: data.name.clone(),
        seed: spec.seed,
        accuracy: accuracy(&test_gold(data), &predictions)?,
        dev_accuracy: model.dev_accuracy(),
        predictions,
        spec: model.spec().clone(),
    })
}

fn store_run(path: &Path, run: &RunResult) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let text = serde_json::to_string(run)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn assemble_cell(
    data: &DatasetSplit,
    kind: ModelKind,
    dim: usize,
    outcomes: &[std::result::Result<RunResult, String>],
    gold: &[usize],
    classes: usize,
) -> CellReport {
    let mut runs = Vec::new();
    let mut errors = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => runs.push(RunResult { dim, ..r.clone() }),
            Err(e) => errors.push(e.clone()),
        }
    }
    let mut confusion = vec![vec![0u64; classes]; classes];
    for r in &runs {
        if let Ok(m) = confusion_matrix(gold, &r.predictions, classes) {
            for (row, add) in confusion.iter_mut().zip(m) {
                for (c, a) in row.iter_mut().zip(add) {
                    *c += a;
                }
            }
        }
    }
    let complete = errors.is_empty();
    let stats = if complete {
        mean_std(&runs.iter().map(|r| r.accuracy).collect::<Vec<_>>()).ok()
    } else {
        None
    };
    CellReport {
        dataset: data.name.clone(),
        kind,
        dim,
        error: (!complete).then(|| errors.join("; ")),
        mean: stats.map(|s| s.0),
        std: stats.map(|s| s.1),
        runs,
        confusion,
    }
}

/// Compares every pair of complete cells sharing a dataset and dimension.
pub fn significance_table(
    cells: &[CellReport],
    datasets: &[DatasetSummary],
    iterations: usize,
    seed: u64,
) -> Vec<PairSignificance> {
    let dims: BTreeSet<usize> = cells.iter().map(|c| c.dim).collect();
    let mut jobs = Vec::new();
    for d in datasets {
        for &dim in &dims {
            let ok: Vec<&CellReport> = cells
                .iter()
                .filter(|c| c.dataset == d.name && c.dim == dim && c.error.is_none() && !c.runs.is_empty())
                .collect();
            for (i, a) in ok.iter().enumerate() {
                for b in &ok[i + 1..] {
                    jobs.push((d, dim, *a, *b));
                }
            }
        }
    }
    jobs.par_iter()
        .filter_map(|(d, dim, a, b)| {
            let n = a.runs.len().max(b.runs.len());
            // A deterministic system's single run is paired with every run of the other.
            let expand = |c: &CellReport| -> Vec<Vec<usize>> {
                (0..n).map(|i| c.runs[i.min(c.runs.len() - 1)].predictions.clone()).collect()
            };
            let tag = format!("{}/{}/{}/{}", d.name, dim, a.kind, b.kind);
            let mut rng = seeded(derive_seed(seed, &tag));
            match runs_significance(&expand(a), &expand(b), &d.gold, iterations, &mut rng) {
                Ok(s) => Some(PairSignificance {
                    dataset: d.name.clone(),
                    dim: *dim,
                    a: a.kind,
                    b: b.kind,
                    p_values: s.p_values,
                    verdict: s.verdict,
                }),
                Err(e) => {
                    log::warn!("significance {tag} skipped: {e}");
                    None
                }
            }
        })
        .collect()
}

fn chi_table(plan: &BenchmarkPlan) -> Vec<ChiRow> {
    let Some(reference) = &plan.chi2_reference else {
        return Vec::new();
    };
    let Some(ref_data) = plan.datasets.iter().find(|d| &d.name == reference) else {
        log::warn!("chi-squared reference dataset {reference:?} is not part of the benchmark");
        return Vec::new();
    };
    plan.datasets
        .iter()
        .filter(|d| &d.name != reference)
        .map(|d| {
            let res = chi_squared_emoticons(d, ref_data);
            ChiRow {
                reference: reference.clone(),
                dataset: d.name.clone(),
                error: res.as_ref().err().map(|e| e.to_string()),
                result: res.ok(),
            }
        })
        .collect()
}

impl BenchmarkReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn cell(&self, dataset: &str, kind: ModelKind, dim: usize) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.dataset == dataset && c.kind == kind && c.dim == dim)
    }

    /// One row per (model, dim, dataset).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,dim,dataset,runs,mean,std,error\n");
        for c in &self.cells {
            let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
            let err = c.error.as_deref().unwrap_or("").replace('"', "'");
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},\"{}\"",
                c.kind,
                c.dim,
                c.dataset,
                c.runs.len(),
                f(c.mean),
                f(c.std),
                err
            );
        }
        out
    }

    /// Accuracy table in percent: one row per model and dimension (BOW once),
    /// one column per dataset plus the macro-average; neural cells carry the
    /// standard deviation in parentheses.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Model | Dim. |");
        for d in &self.datasets {
            let _ = write!(out, " {} |", d.name);
        }
        out.push_str(" Macro-Avg. |\n|---|---|");
        for _ in 0..=self.datasets.len() {
            out.push_str("---|");
        }
        out.push('\n');
        let mut seen_bow = false;
        for row in &self.macro_averages {
            if row.kind == ModelKind::Bow {
                if seen_bow {
                    continue;
                }
                seen_bow = true;
            }
            let dim = if row.kind == ModelKind::Bow { "-".to_string() } else { row.dim.to_string() };
            let _ = write!(out, "| {} | {dim} |", row.kind);
            for d in &self.datasets {
                let cell = self.cell(&d.name, row.kind, row.dim);
                let text = match cell {
                    Some(c) if c.error.is_none() => {
                        let mean = c.mean.unwrap_or(f64::NAN) * 100.0;
                        if row.kind.is_neural() {
                            format!("{mean:.1} ({:.1})", c.std.unwrap_or(0.0) * 100.0)
                        } else {
                            format!("{mean:.1}")
                        }
                    }
                    _ => "failed".to_string(),
                };
                let _ = write!(out, " {text} |");
            }
            let avg = row.value.map(|v| format!("{:.1}", v * 100.0)).unwrap_or_else(|| "-".into());
            let _ = writeln!(out, " {avg} |");
        }
        out
    }

    /// Writes `report.json`, `results.csv`, `results.md` and one confusion
    /// matrix CSV per cell under `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let confusion_dir = dir.join("confusion");
        fs::create_dir_all(&confusion_dir).map_err(|e| Error::io(&confusion_dir, e))?;
        let write = |name: &Path, text: String| fs::write(name, text).map_err(|e| Error::io(name, e));
        write(&dir.join("report.json"), self.to_json()?)?;
        write(&dir.join("results.csv"), self.to_csv())?;
        write(&dir.join("results.md"), self.to_markdown())?;
        for c in &self.cells {
            let labels = self
                .datasets
                .iter()
                .find(|d| d.name == c.dataset)
                .map(|d| d.labels.clone())
                .unwrap_or_default();
            let mut text = String::from("gold\\pred");
            for l in &labels {
                let _ = write!(text, ",{l}");
            }
            text.push('\n');
            for (label, row) in labels.iter().zip(&c.confusion) {
                text.push_str(label);
                for v in row {
                    let _ = write!(text, ",{v}");
                }
                text.push('\n');
            }
            write(&confusion_dir.join(format!("{}_{}_{}.csv", c.dataset, c.kind, c.dim)), text)?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
