use proptest::prelude::*;
use sentibench::data::{
    load_dataset, sst_to_binary, tokenize, write_dataset, DatasetSplit, LabelScheme, LabeledExample, Vocabulary,
};
use sentibench::embeddings::{oov_vector, EmbeddingMatrix, OOV_RANGE};
use sentibench::eval::{accuracy, approx_rand_test, chi_squared_table, macro_average, majority_verdict};
use sentibench::linear::{train_logreg, train_svm, FeatureMatrix, LinearConfig};
use sentibench::rng::seeded;

fn word() -> impl Strategy<Value = String> {
    "[a-z]{1,6}"
}

fn examples(labels: usize) -> impl Strategy<Value = Vec<LabeledExample>> {
    prop::collection::vec((prop::collection::vec(word(), 1..6), 0..labels), 1..12)
        .prop_map(|v| v.into_iter().map(|(w, l)| LabeledExample::new(w.join(" "), l).unwrap()).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tokenize_is_stable_on_its_output(text in "[ a-zA-Z,.!?']{0,40}") {
        let tokens = tokenize(&text);
        prop_assert_eq!(tokenize(&tokens.join(" ")), tokens.clone());
        prop_assert!(tokens.iter().all(|t| !t.is_empty() && !t.contains(char::is_whitespace)));
    }

    #[test]
    fn vocabulary_indices_are_a_bijection(words in prop::collection::vec(word(), 1..40)) {
        let vocab = Vocabulary::build([words.clone()].iter(), 1).unwrap();
        for (i, w) in vocab.words().iter().enumerate() {
            prop_assert_eq!(vocab.get(w), Some(i));
            prop_assert_eq!(vocab.word(i), w.as_str());
        }
        prop_assert_eq!(vocab.counts().iter().sum::<u64>(), words.len() as u64);
    }

    #[test]
    fn datasets_round_trip_through_files(train in examples(5), dev in examples(5), test in examples(5)) {
        let split = DatasetSplit::new("x", LabelScheme::with_labels(5).unwrap(), train, dev, test).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x");
        write_dataset(&split, &path).unwrap();
        prop_assert_eq!(load_dataset(&path, split.scheme.clone()).unwrap(), split);
    }

    #[test]
    fn binary_collapse_drops_exactly_the_neutral_examples(train in examples(5), dev in examples(5), test in examples(5)) {
        let split = DatasetSplit::new("x", LabelScheme::with_labels(5).unwrap(), train, dev, test).unwrap();
        match sst_to_binary(&split) {
            Ok(bin) => {
                for (fine, coarse) in [(&split.train, &bin.train), (&split.dev, &bin.dev), (&split.test, &bin.test)] {
                    let kept: Vec<_> = fine.iter().filter(|e| e.label != 2).collect();
                    prop_assert_eq!(kept.len(), coarse.len());
                    for (f, c) in kept.iter().zip(coarse.iter()) {
                        prop_assert_eq!(&f.text, &c.text);
                        prop_assert_eq!(c.label, usize::from(f.label > 2));
                    }
                }
            }
            // Only possible when some partition is entirely neutral.
            Err(_) => prop_assert!([&split.train, &split.dev, &split.test].iter().any(|p| p.iter().all(|e| e.label == 2))),
        }
    }

    #[test]
    fn embeddings_round_trip_exactly(words in prop::collection::btree_set(word(), 1..10), dim in 1usize..5, seed in any::<u64>()) {
        let vocab = Vocabulary::from_entries(words.into_iter().map(|w| (w, 0))).unwrap();
        let mut rng = seeded(seed);
        let data: Vec<f64> = (0..vocab.len() * dim).map(|_| rand::Rng::gen_range(&mut rng, -1e3..1e3)).collect();
        let emb = EmbeddingMatrix::new(vocab, dim, data, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.txt");
        emb.save(&path).unwrap();
        prop_assert_eq!(EmbeddingMatrix::load(&path).unwrap(), emb);
    }

    #[test]
    fn oov_vectors_are_deterministic_and_bounded(seed in any::<u64>(), w in word(), dim in 1usize..50) {
        let v = oov_vector(seed, &w, dim);
        prop_assert_eq!(&v, &oov_vector(seed, &w, dim));
        prop_assert!(v.iter().all(|x| x.abs() <= OOV_RANGE));
    }

    #[test]
    fn randomization_p_is_a_symmetric_probability(
        pairs in prop::collection::vec((0usize..3, 0usize..3, 0usize..3), 1..60),
        seed in any::<u64>(),
    ) {
        let gold: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let a: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let b: Vec<usize> = pairs.iter().map(|p| p.2).collect();
        let p_ab = approx_rand_test(&a, &b, &gold, 500, &mut seeded(seed)).unwrap();
        let p_ba = approx_rand_test(&b, &a, &gold, 500, &mut seeded(seed)).unwrap();
        prop_assert!(p_ab >= 1.0 / 501.0 && p_ab <= 1.0);
        prop_assert_eq!(p_ab, p_ba);
        // Equal correctness on every item leaves nothing to permute.
        let same_correctness: Vec<usize> = gold.iter().zip(&a).map(|(&g, &x)| if x == g { g } else { (g + 1) % 3 }).collect();
        prop_assert_eq!(approx_rand_test(&a, &same_correctness, &gold, 500, &mut seeded(seed)).unwrap(), 1.0);
        let acc = accuracy(&gold, &a).unwrap();
        prop_assert!((0.0..=1.0).contains(&acc));
    }

    #[test]
    fn majority_verdict_is_monotone(ps in prop::collection::vec(0.0f64..0.05, 1..8), i in any::<prop::sample::Index>()) {
        // Lowering any p-value never turns a significant verdict insignificant.
        let mut lower = ps.clone();
        let k = i.index(ps.len());
        lower[k] /= 2.0;
        prop_assert!(!majority_verdict(&ps) || majority_verdict(&lower));
    }

    #[test]
    fn chi_squared_is_symmetric_and_bounded(a in prop::collection::vec(0u64..50, 6), b in prop::collection::vec(0u64..50, 6)) {
        prop_assume!(a.iter().sum::<u64>() > 0 && b.iter().sum::<u64>() > 0);
        let ab = chi_squared_table(&a, &b).unwrap();
        let ba = chi_squared_table(&b, &a).unwrap();
        prop_assert!((ab.statistic - ba.statistic).abs() <= 1e-9 * ab.statistic.max(1.0));
        prop_assert!(ab.statistic >= 0.0 && (0.0..=1.0).contains(&ab.p_value));
        let doubled: Vec<u64> = a.iter().map(|x| 2 * x).collect();
        prop_assert!(chi_squared_table(&a, &doubled).unwrap().statistic < 1e-9);
    }

    #[test]
    fn macro_average_lies_between_extremes(vals in prop::collection::vec(0.0f64..1.0, 1..8)) {
        let avg = macro_average(&vals.iter().copied().map(Some).collect::<Vec<_>>()).unwrap();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(avg >= lo - 1e-12 && avg <= hi + 1e-12);
    }

    #[test]
    fn linear_objectives_never_increase(
        rows in prop::collection::vec((prop::collection::vec(-2.0f64..2.0, 3), 0usize..3), 4..30),
        lambda in 1e-4f64..1.0,
    ) {
        let labels: Vec<usize> = rows.iter().map(|r| r.1).collect();
        let x = FeatureMatrix::dense(rows.into_iter().map(|r| r.0).collect()).unwrap();
        let config = LinearConfig { max_iterations: 50, ..LinearConfig::default() };
        let fit = train_logreg(&x, &labels, 3, lambda, &config).unwrap();
        prop_assert!(fit.objective.windows(2).all(|w| w[1] <= w[0]));
        // The SVM reports its best iterate, which is never worse than the start.
        let svm = train_svm(&x, &labels, 3, lambda, &config).unwrap();
        prop_assert!(svm.objective.last() <= svm.objective.first());
    }
}
