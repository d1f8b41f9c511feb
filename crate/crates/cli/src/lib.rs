//! Command-line driver: resource preparation, the benchmark and its
//! statistics.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use sentibench::benchmark::{run_benchmark, significance_table, BenchmarkReport};
use sentibench::data::{infer_scheme, load_dataset, tokenize};
use sentibench::embeddings::{train_skipgram, EmbeddingMatrix, SkipgramConfig};
use sentibench::eval::{chi_squared_emoticons, runs_significance, RANDOMIZATION_ITERATIONS};
use sentibench::joint::{load_distant_corpus, train_joint, DistantMarkers, JointConfig};
use sentibench::retrofit::{load_lexicon, retrofit_embeddings, EdgeWeight, RetrofitConfig};
use sentibench::rng::seeded;
use serde_json::json;
use sha2::{Digest, Sha256};

pub use config::BenchConfig;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}

#[derive(Debug, Parser)]
#[command(name = "sentibench", version, about = "Sentiment benchmark over seven model families")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train skip-gram vectors on text files or dataset directories.
    TrainEmbeddings(TrainEmbeddingsArgs),
    /// Pull vectors of lexicon neighbours together.
    Retrofit(RetrofitArgs),
    /// Train sentiment-aware vectors on an emoticon-marked corpus.
    TrainJoint(TrainJointArgs),
    /// Train and evaluate every configured model on every dataset.
    #[command(after_long_help = config::keys_help())]
    Benchmark(BenchmarkArgs),
    /// Randomization tests between prediction sets.
    Significance(SignificanceArgs),
    /// Emoticon distribution test between two datasets.
    Chi2(Chi2Args),
    /// Rewrite tables from a saved report.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct TrainEmbeddingsArgs {
    /// Text file (one text per line) or dataset directory; repeatable.
    #[arg(long, required = true)]
    pub corpus: Vec<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub dim: usize,
    #[arg(long, default_value_t = SkipgramConfig::default().window)]
    pub window: usize,
    #[arg(long, default_value_t = SkipgramConfig::default().negatives)]
    pub negatives: usize,
    #[arg(long, default_value_t = SkipgramConfig::default().iterations)]
    pub iterations: usize,
    #[arg(long, default_value_t = SkipgramConfig::default().min_count)]
    pub min_count: u64,
    #[arg(long, default_value_t = SkipgramConfig::default().subsample)]
    pub subsample: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct RetrofitArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Word pairs, one per line, separated by whitespace.
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Constant edge weight; the default is one over the word's degree.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct TrainJointArgs {
    /// One text per line; emoticons decide the polarity and are removed.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = JointConfig::default().dim)]
    pub dim: usize,
    #[arg(long, default_value_t = JointConfig::default().alpha)]
    pub alpha: f64,
    #[arg(long, default_value_t = JointConfig::default().window)]
    pub window: usize,
    #[arg(long, default_value_t = JointConfig::default().hidden)]
    pub hidden: usize,
    #[arg(long, default_value_t = JointConfig::default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = JointConfig::default().learning_rate)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = JointConfig::default().min_count)]
    pub min_count: u64,
    /// Extra positive markers such as `#happy`; repeatable.
    #[arg(long)]
    pub positive_tag: Vec<String>,
    #[arg(long)]
    pub negative_tag: Vec<String>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Replaces the seed list by SEED, SEED+1, ... keeping its length.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Validate the config and load the datasets without training.
    #[arg(long)]
    pub dry_run: bool,
    /// Reuse runs finished by an earlier invocation with the same output.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct SignificanceArgs {
    /// Saved benchmark report; recomputes every pairwise comparison.
    #[arg(long, conflicts_with_all = ["gold", "a", "b"])]
    pub report: Option<PathBuf>,
    /// Gold labels, one integer per line.
    #[arg(long, requires_all = ["a", "b"])]
    pub gold: Option<PathBuf>,
    /// Predictions of system A, one file per run; repeatable.
    #[arg(long)]
    pub a: Vec<PathBuf>,
    #[arg(long)]
    pub b: Vec<PathBuf>,
    #[arg(long, default_value_t = RANDOMIZATION_ITERATIONS)]
    pub iterations: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Also write the TSV to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct Chi2Args {
    /// Dataset directory.
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub dry_run: bool,
}

/// Runs `command` with `args` as if typed after `sentibench`.
pub fn execute<I, T>(command: &str, args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv = [OsString::from("sentibench"), OsString::from(command)]
        .into_iter()
        .chain(args.into_iter().map(Into::into));
    run(Cli::try_parse_from(argv)?)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainEmbeddings(a) => train_embeddings(a),
        Command::Retrofit(a) => retrofit(a),
        Command::TrainJoint(a) => joint(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Significance(a) => significance(a),
        Command::Chi2(a) => chi2(a),
        Command::Report(a) => report(a),
    }
}

fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn manifest(command: &str, config: &str, seeds: &[u64]) -> serde_json::Value {
    json!({
        "command": command,
        "config_hash": sha256_hex(config),
        "seeds": seeds,
        "version": env!("CARGO_PKG_VERSION"),
    })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Single-file artifacts get a `<file>.manifest.json` next to them.
fn write_sidecar(out: &Path, command: &str, args: &impl std::fmt::Debug, seeds: &[u64]) -> Result<()> {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    write_json(Path::new(&name), &manifest(command, &format!("{args:?}"), seeds))
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => {
            fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
        }
        _ => Ok(()),
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    ensure!(path.is_file(), "{what} {} does not exist", path.display());
    Ok(())
}

fn read_corpus(paths: &[PathBuf]) -> Result<Vec<Vec<String>>> {
    let mut corpus = Vec::new();
    for p in paths {
        if p.is_dir() {
            let split = load_dataset(p, infer_scheme(p)?).with_context(|| format!("dataset {}", p.display()))?;
            corpus.extend(split.texts().map(tokenize));
        } else {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            corpus.extend(text.lines().map(tokenize).filter(|t| !t.is_empty()));
        }
    }
    Ok(corpus)
}

fn train_embeddings(args: TrainEmbeddingsArgs) -> Result<()> {
    let config = SkipgramConfig {
        dim: args.dim,
        window: args.window,
        negatives: args.negatives,
        iterations: args.iterations,
        min_count: args.min_count,
        subsample: args.subsample,
        seed: args.seed,
        ..SkipgramConfig::default()
    };
    config.validate()?;
    for p in &args.corpus {
        ensure!(p.exists(), "corpus {} does not exist", p.display());
    }
    if args.dry_run {
        return Ok(());
    }
    let corpus = read_corpus(&args.corpus)?;
    log::info!("training {}-dimensional skip-gram vectors on {} texts", args.dim, corpus.len());
    let emb = train_skipgram(&corpus, config)?;
    create_parent(&args.out)?;
    emb.save(&args.out)?;
    write_sidecar(&args.out, "train-embeddings", &args, &[args.seed])?;
    println!("{}\t{} words\t{} dims", args.out.display(), emb.len(), emb.dim());
    Ok(())
}

fn retrofit(args: RetrofitArgs) -> Result<()> {
    require_file(&args.embeddings, "embeddings")?;
    require_file(&args.lexicon, "lexicon")?;
    let config = RetrofitConfig {
        iterations: args.iters,
        alpha: args.alpha,
        beta: args.beta.map_or(EdgeWeight::InverseDegree, EdgeWeight::Constant),
    };
    let emb = EmbeddingMatrix::load(&args.embeddings)?;
    let graph = load_lexicon(&args.lexicon, emb.vocab())?;
    if args.dry_run {
        // Exercise the parameter checks on an empty run.
        retrofit_embeddings(&emb, &graph, &RetrofitConfig { iterations: 0, ..config })?;
        return Ok(());
    }
    log::info!("retrofitting {} words over {} lexicon edges", emb.len(), graph.num_edges());
    let out = retrofit_embeddings(&emb, &graph, &config)?;
    create_parent(&args.out)?;
    out.save(&args.out)?;
    write_sidecar(&args.out, "retrofit", &args, &[])?;
    println!("{}\t{} words\t{} dims", args.out.display(), out.len(), out.dim());
    Ok(())
}

fn joint(args: TrainJointArgs) -> Result<()> {
    require_file(&args.corpus, "corpus")?;
    let config = JointConfig {
        dim: args.dim,
        window: args.window,
        hidden: args.hidden,
        alpha: args.alpha,
        learning_rate: args.learning_rate,
        epochs: args.epochs,
        min_count: args.min_count,
        seed: args.seed,
    };
    config.validate()?;
    if args.dry_run {
        return Ok(());
    }
    let pos: Vec<&str> = args.positive_tag.iter().map(String::as_str).collect();
    let neg: Vec<&str> = args.negative_tag.iter().map(String::as_str).collect();
    let markers = DistantMarkers::default().with_hashtags(&pos, &neg);
    let corpus = load_distant_corpus(&args.corpus, &markers)?;
    ensure!(!corpus.is_empty(), "no line of {} carries a decisive marker", args.corpus.display());
    log::info!("training joint vectors on {} labeled texts", corpus.len());
    let emb = train_joint(&corpus, config)?;
    create_parent(&args.out)?;
    emb.save(&args.out)?;
    write_sidecar(&args.out, "train-joint", &args, &[args.seed])?;
    println!("{}\t{} words\t{} dims", args.out.display(), emb.len(), emb.dim());
    Ok(())
}

fn benchmark(args: BenchmarkArgs) -> Result<()> {
    let mut cfg = BenchConfig::load(&args.config)?;
    let base = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    if let Some(jobs) = args.jobs {
        cfg.jobs = jobs;
    }
    if let Some(seed) = args.seed {
        cfg.seeds = (0..cfg.seeds.len() as u64).map(|i| seed + i).collect();
    }
    let out = match &args.out {
        Some(o) => o.clone(),
        None => config::resolve(&base, &cfg.out),
    };
    let cache = out.join("cache");
    let plan = cfg.plan(&base, Some(cache.clone()))?;
    plan.validate()?;
    let trainings: usize = plan
        .models
        .iter()
        .map(|m| if m.kind.is_neural() { plan.dims.len() * plan.seeds.len() } else { plan.dims.len() })
        .sum::<usize>()
        * plan.datasets.len();
    if args.dry_run {
        println!(
            "config ok: {} datasets, {} models, {} dims, {} seeds, {trainings} training runs",
            plan.datasets.len(),
            plan.models.len(),
            plan.dims.len(),
            plan.seeds.len()
        );
        return Ok(());
    }
    if !args.resume && cache.exists() {
        fs::remove_dir_all(&cache).with_context(|| format!("clearing {}", cache.display()))?;
    }
    log::info!("benchmark: {trainings} training runs on {} threads", plan.jobs);
    let report = run_benchmark(&plan)?;
    report.write(&out)?;
    let canonical = cfg.serialize();
    fs::write(out.join("config.cfg"), &canonical)?;
    write_json(&out.join("manifest.json"), &manifest("benchmark", &canonical, &cfg.seeds))?;
    let failed: Vec<String> = report
        .cells
        .iter()
        .filter_map(|c| c.error.as_ref().map(|e| format!("{}/{}/{}: {e}", c.dataset, c.kind, c.dim)))
        .collect();
    for f in &failed {
        log::warn!("failed cell {f}");
    }
    print!("{}", report.to_markdown());
    println!("\nwrote {} ({} cells, {} failed)", out.display(), report.cells.len(), failed.len());
    Ok(())
}

fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse().with_context(|| format!("{} line {}: expected a label index", path.display(), i + 1))
        })
        .collect()
}

fn fmt_p(ps: &[f64]) -> String {
    ps.iter().map(|p| format!("{p:.6}")).collect::<Vec<_>>().join(",")
}

fn significance(args: SignificanceArgs) -> Result<()> {
    ensure!(args.iterations > 0, "--iterations must be positive");
    let mut tsv = String::new();
    let seeds = [args.seed];
    if let Some(path) = &args.report {
        let report = BenchmarkReport::load(path)?;
        if args.dry_run {
            return Ok(());
        }
        tsv.push_str("dataset\tdim\ta\tb\tsignificant\tp_values\n");
        for s in significance_table(&report.cells, &report.datasets, args.iterations, args.seed) {
            tsv.push_str(&format!("{}\t{}\t{}\t{}\t{}\t{}\n", s.dataset, s.dim, s.a, s.b, s.verdict, fmt_p(&s.p_values)));
        }
    } else {
        let Some(gold) = &args.gold else {
            bail!("give either --report or --gold with --a and --b");
        };
        ensure!(args.a.len() == args.b.len(), "--a and --b need the same number of runs");
        let gold = read_labels(gold)?;
        let a = args.a.iter().map(|p| read_labels(p)).collect::<Result<Vec<_>>>()?;
        let b = args.b.iter().map(|p| read_labels(p)).collect::<Result<Vec<_>>>()?;
        if args.dry_run {
            return Ok(());
        }
        let s = runs_significance(&a, &b, &gold, args.iterations, &mut seeded(args.seed))?;
        tsv.push_str(&format!("{}\t{}\n", s.verdict, fmt_p(&s.p_values)));
    }
    print!("{tsv}");
    if let Some(out) = &args.out {
        create_parent(out)?;
        fs::write(out, &tsv)?;
        write_sidecar(out, "significance", &args, &seeds)?;
    }
    Ok(())
}

fn chi2(args: Chi2Args) -> Result<()> {
    let load = |p: &Path| -> Result<_> {
        ensure!(p.is_dir(), "dataset directory {} does not exist", p.display());
        Ok(load_dataset(p, infer_scheme(p)?)?)
    };
    let a = load(&args.a)?;
    let b = load(&args.b)?;
    if args.dry_run {
        return Ok(());
    }
    let r = chi_squared_emoticons(&a, &b)?;
    println!("{:.6}\t{}\t{:.6}", r.statistic, r.df, r.p_value);
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let report = BenchmarkReport::load(&args.report)?;
    if args.dry_run {
        return Ok(());
    }
    report.write(&args.out)?;
    let seeds: Vec<u64> = {
        let mut s: Vec<u64> = report.cells.iter().flat_map(|c| c.runs.iter().map(|r| r.seed)).collect();
        s.sort_unstable();
        s.dedup();
        s
    };
    let source = fs::read_to_string(&args.report)?;
    write_json(&args.out.join("manifest.json"), &manifest("report", &source, &seeds))?;
    print!("{}", report.to_markdown());
    Ok(())
}
