//! Synthetic fixtures: a linearly separable two-class corpus whose
//! sentiment words have matching pre-trained vectors, a synonym lexicon and
//! an emoticon-marked distant corpus.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use sentibench::data::{DatasetSplit, LabelScheme, LabeledExample};
use sentibench::rng::seeded;

pub const POSITIVE: [&str; 8] = ["good", "great", "fine", "nice", "superb", "lovely", "happy", "brilliant"];
pub const NEGATIVE: [&str; 8] = ["bad", "awful", "poor", "nasty", "dreadful", "ugly", "sad", "terrible"];

pub fn filler() -> Vec<String> {
    (0..40).map(|i| format!("w{i}")).collect()
}

fn sentence(rng: &mut sentibench::rng::Rng, label: usize) -> String {
    let lexicon: &[&str] = if label == 1 { &POSITIVE } else { &NEGATIVE };
    let filler = filler();
    let len = rng.gen_range(5..10);
    let mut words: Vec<String> = (0..len).map(|_| filler.choose(rng).unwrap().clone()).collect();
    for _ in 0..rng.gen_range(1..3) {
        let at = rng.gen_range(0..=words.len());
        words.insert(at, lexicon.choose(rng).unwrap().to_string());
    }
    words.join(" ")
}

/// `n` examples split 60/20/20 with balanced labels.
pub fn separable_dataset(name: &str, n: usize, seed: u64) -> DatasetSplit {
    let mut rng = seeded(seed);
    let mut examples: Vec<LabeledExample> = (0..n)
        .map(|i| LabeledExample::new(sentence(&mut rng, i % 2), i % 2).unwrap())
        .collect();
    examples.shuffle(&mut rng);
    let test = examples.split_off(n * 4 / 5);
    let dev = examples.split_off(n * 3 / 5);
    DatasetSplit::new(name, LabelScheme::binary(), examples, dev, test).unwrap()
}

/// Text-format vectors: sentiment words carry their polarity on the first
/// coordinate, every other coordinate and every filler word is small noise.
pub fn write_embeddings(path: &Path, dim: usize, seed: u64) {
    let mut rng = seeded(seed);
    let mut words: Vec<(String, f64)> = Vec::new();
    words.extend(POSITIVE.iter().map(|w| (w.to_string(), 1.0)));
    words.extend(NEGATIVE.iter().map(|w| (w.to_string(), -1.0)));
    words.extend(filler().into_iter().map(|w| (w, 0.0)));
    let mut out = format!("{} {dim}\n", words.len());
    for (w, polarity) in words {
        out.push_str(&w);
        for k in 0..dim {
            let noise: f64 = rng.gen_range(-0.1..0.1);
            let v = if k == 0 { polarity + noise } else { noise };
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    fs::write(path, out).unwrap();
}

/// Chains within each polarity class.
pub fn write_lexicon(path: &Path) {
    let mut out = String::new();
    for class in [&POSITIVE, &NEGATIVE] {
        for pair in class.windows(2) {
            let _ = writeln!(out, "{}\t{}", pair[0], pair[1]);
        }
    }
    fs::write(path, out).unwrap();
}

/// `n` lines ending in a positive or negative emoticon.
pub fn write_distant_corpus(path: &Path, n: usize, seed: u64) {
    let mut rng = seeded(seed);
    let mut out = String::new();
    for i in 0..n {
        let label = i % 2;
        let mark = if label == 1 { ":)" } else { ":(" };
        let _ = writeln!(out, "{} {mark}", sentence(&mut rng, label));
    }
    fs::write(path, out).unwrap();
}

pub struct Resources {
    pub embeddings: PathBuf,
    pub lexicon: PathBuf,
    pub distant: PathBuf,
}

pub fn write_resources(dir: &Path, dim: usize) -> Resources {
    let r = Resources {
        embeddings: dir.join(format!("vectors{dim}.txt")),
        lexicon: dir.join("lexicon.tsv"),
        distant: dir.join("distant.txt"),
    };
    write_embeddings(&r.embeddings, dim, 11);
    write_lexicon(&r.lexicon);
    write_distant_corpus(&r.distant, 400, 12);
    r
}
