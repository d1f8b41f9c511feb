mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sentibench::benchmark::{run_benchmark, BenchmarkPlan, BenchmarkReport};
use sentibench::models::{EmbeddingSource, ModelKind, ModelSpec};

fn plan(dir: &Path, kinds: &[ModelKind], dims: &[usize], seeds: Vec<u64>) -> BenchmarkPlan {
    let mut embeddings = BTreeMap::new();
    let mut res = None;
    for &dim in dims {
        let r = common::write_resources(dir, dim);
        embeddings.insert(dim, EmbeddingSource::File(r.embeddings.clone()));
        res = Some(r);
    }
    let res = res.unwrap();
    let models = kinds
        .iter()
        .map(|&kind| {
            let mut spec = ModelSpec::new(kind, dims[0]);
            spec.lexicon = Some(res.lexicon.clone());
            spec.joint_corpus = Some(res.distant.clone());
            spec.hidden = Some(8);
            spec.epochs = Some(2);
            spec.recurrent = 8;
            spec.filters = 8;
            spec.joint.epochs = 2;
            spec
        })
        .collect();
    BenchmarkPlan {
        datasets: vec![common::separable_dataset("one", 120, 1), common::separable_dataset("two", 120, 2)],
        models,
        dims: dims.to_vec(),
        embeddings,
        seeds,
        jobs: 2,
        significance_iterations: 200,
        significance_seed: 1,
        chi2_reference: None,
        cache_dir: None,
    }
}

#[test]
fn bow_is_shared_across_dims_and_collapsed_in_markdown() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_benchmark(&plan(dir.path(), &[ModelKind::Bow, ModelKind::Ave], &[4, 6], vec![1])).unwrap();
    let a = report.cell("one", ModelKind::Bow, 4).unwrap();
    let b = report.cell("one", ModelKind::Bow, 6).unwrap();
    assert_eq!(a.runs[0].predictions, b.runs[0].predictions);
    assert_eq!(b.runs[0].dim, 6);
    let md = report.to_markdown();
    assert_eq!(md.lines().filter(|l| l.starts_with("| BOW")).count(), 1);
    assert_eq!(md.lines().filter(|l| l.starts_with("| AVE")).count(), 2);
    // Two datasets x two kinds x two dims, plus the header.
    assert_eq!(report.to_csv().lines().count(), 9);
}

#[test]
fn neural_cells_run_every_seed_and_deterministic_cells_once() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_benchmark(&plan(dir.path(), &[ModelKind::Ave, ModelKind::Cnn], &[4], vec![1, 2, 3])).unwrap();
    assert_eq!(report.cell("one", ModelKind::Ave, 4).unwrap().runs.len(), 1);
    let cnn = report.cell("one", ModelKind::Cnn, 4).unwrap();
    assert_eq!(cnn.runs.iter().map(|r| r.seed).collect::<Vec<_>>(), [1, 2, 3]);
    let total: u64 = cnn.confusion.iter().flatten().sum();
    assert_eq!(total as usize, 3 * cnn.runs[0].predictions.len());
    // One AVE-vs-CNN comparison per dataset, with the single AVE run broadcast.
    assert_eq!(report.significance.len(), 2);
    assert!(report.significance.iter().all(|s| s.p_values.len() == 3));
}

#[test]
fn a_failing_cell_does_not_abort_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = plan(dir.path(), &[ModelKind::Bow, ModelKind::Retrofit], &[4], vec![1]);
    p.models[1].lexicon = Some(dir.path().join("missing-lexicon.tsv"));
    let report = run_benchmark(&p).unwrap();
    let bad = report.cell("one", ModelKind::Retrofit, 4).unwrap();
    assert!(bad.error.is_some() && bad.mean.is_none());
    assert!(report.cell("one", ModelKind::Bow, 4).unwrap().mean.is_some());
    let row = report.macro_averages.iter().find(|r| r.kind == ModelKind::Retrofit).unwrap();
    assert!(row.value.is_none());
    assert!(report.to_markdown().contains("failed"));
}

#[test]
fn resumed_run_reuses_cached_results() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let mut p = plan(dir.path(), &[ModelKind::Bow, ModelKind::Lstm], &[4], vec![1, 2]);
    p.cache_dir = Some(cache.clone());
    let first = run_benchmark(&p).unwrap();
    let cached: Vec<_> = fs::read_dir(cache.join("runs")).unwrap().collect();
    assert_eq!(cached.len(), 2 * (1 + 2));

    // With the embeddings gone only cached results can complete the LSTM cells.
    fs::remove_file(dir.path().join("vectors4.txt")).unwrap();
    let second = run_benchmark(&p).unwrap();
    assert_eq!(first.to_json().unwrap(), second.to_json().unwrap());
}

#[test]
fn written_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = plan(dir.path(), &[ModelKind::Bow], &[4], vec![1]);
    p.chi2_reference = Some("one".into());
    let report = run_benchmark(&p).unwrap();
    let out = dir.path().join("out");
    report.write(&out).unwrap();
    assert_eq!(BenchmarkReport::load(out.join("report.json")).unwrap(), report);
    assert!(out.join("results.csv").exists() && out.join("results.md").exists());
    let confusion = fs::read_to_string(out.join("confusion/one_BOW_4.csv")).unwrap();
    assert_eq!(confusion.lines().count(), 3);
    // The synthetic texts carry no emoticons, so the table is degenerate.
    assert_eq!(report.chi_squared.len(), 1);
    assert!(report.chi_squared[0].error.is_some());
}

#[test]
fn invalid_plans_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = plan(dir.path(), &[ModelKind::Bow], &[4], vec![1]);
    p.seeds.clear();
    assert!(run_benchmark(&p).is_err());
    let mut p = plan(dir.path(), &[ModelKind::Bow, ModelKind::Bow], &[4], vec![1]);
    assert!(run_benchmark(&p).is_err());
    p.models.pop();
    p.datasets.push(p.datasets[0].clone());
    assert!(run_benchmark(&p).is_err());
}
