//! Accuracy metrics, run statistics, approximate randomization testing with
//! the majority-of-runs rule, and the emoticon χ² analysis.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::data::{DatasetSplit, Partition};
use crate::error::{Error, Result};
use crate::rng::Rng;

fn check_lengths(gold: &[usize], pred: &[usize]) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(Error::shape(format!("{} predictions", gold.len()), pred.len()));
    }
    if gold.is_empty() {
        return Err(Error::invalid("no predictions to score"));
    }
    Ok(())
}

/// Fraction of positions where `pred` equals `gold`.
///
/// ```
/// # use sentibench::eval::accuracy;
/// assert_eq!(accuracy(&[1, 0, 1], &[1, 1, 1]).unwrap(), 2.0 / 3.0);
/// ```
pub fn accuracy(gold: &[usize], pred: &[usize]) -> Result<f64> {
    check_lengths(gold, pred)?;
    let hits = gold.iter().zip(pred).filter(|(g, p)| g == p).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// Unweighted mean of per-dataset accuracies. Every dataset must be present.
pub fn macro_average(per_dataset: &[Option<f64>]) -> Result<f64> {
    if per_dataset.is_empty() {
        return Err(Error::invalid("no datasets to average"));
    }
    let mut sum = 0.0;
    for (i, v) in per_dataset.iter().enumerate() {
        sum += v.ok_or_else(|| Error::invalid(format!("dataset {i} has no accuracy")))?;
    }
    Ok(sum / per_dataset.len() as f64)
}

/// `m[i][j]` counts examples of gold class `i` predicted as `j`.
pub fn confusion_matrix(gold: &[usize], pred: &[usize], classes: usize) -> Result<Vec<Vec<u64>>> {
    if gold.len() != pred.len() {
        return Err(Error::shape(format!("{} predictions", gold.len()), pred.len()));
    }
    let mut m = vec![vec![0u64; classes]; classes];
    for (&g, &p) in gold.iter().zip(pred) {
        if g >= classes || p >= classes {
            return Err(Error::invalid(format!("label outside {classes} classes")));
        }
        m[g][p] += 1;
    }
    Ok(m)
}

/// Mean and sample (n − 1) standard deviation; the deviation of a single
/// value is zero.
pub fn mean_std(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::invalid("no values"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

/// Iterations of the randomization test.
pub const RANDOMIZATION_ITERATIONS: usize = 10_000;

/// Approximate randomization test on the absolute accuracy difference.
///
/// Each iteration swaps every prediction pair independently with probability
/// one half. Swapping a pair on which both systems are equally right changes
/// nothing, so only the pairs where exactly one system is correct are
/// randomized (a swap there flips the sign of its contribution). Returns
/// `(count + 1) / (iterations + 1)` where `count` is the number of
/// iterations whose statistic reaches the observed one.
pub fn approx_rand_test(pred_a: &[usize], pred_b: &[usize], gold: &[usize], iterations: usize, rng: &mut Rng) -> Result<f64> {
    check_lengths(gold, pred_a)?;
    check_lengths(gold, pred_b)?;
    let (mut plus, mut minus) = (0i64, 0i64);
    for ((&g, &a), &b) in gold.iter().zip(pred_a).zip(pred_b) {
        match (a == g, b == g) {
            (true, false) => plus += 1,
            (false, true) => minus += 1,
            _ => {}
        }
    }
    let observed = (plus - minus).abs();
    let words = |k: i64| (k as usize).div_ceil(64);
    let kept = |k: i64, rng: &mut Rng| -> i64 {
        let mut count = 0i64;
        let mut left = k;
        for _ in 0..words(k) {
            let mut bits = rng.next_u64();
            if left < 64 {
                bits &= (1u64 << left) - 1;
            }
            count += i64::from(bits.count_ones());
            left -= 64;
        }
        count
    };
    // Drawing for the larger group first makes the result symmetric in a and b.
    let (x, y) = (plus.max(minus), plus.min(minus));
    let mut hits = 0usize;
    for _ in 0..iterations {
        let kx = kept(x, rng);
        let ky = kept(y, rng);
        let stat = ((2 * kx - x) - (2 * ky - y)).abs();
        if stat >= observed {
            hits += 1;
        }
    }
    Ok((hits + 1) as f64 / (iterations + 1) as f64)
}

/// Family-wise significance level, Bonferroni-split across paired runs.
pub const FAMILY_ALPHA: f64 = 0.05;

/// Majority-of-runs rule: with `n` paired runs, at least `⌊n/2⌋ + 1` of them
/// must have `p < 0.05 / n` (for five runs, three below 0.01).
pub fn majority_verdict(p_values: &[f64]) -> bool {
    let n = p_values.len();
    if n == 0 {
        return false;
    }
    let threshold = FAMILY_ALPHA / n as f64;
    p_values.iter().filter(|&&p| p < threshold).count() > n / 2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub p_values: Vec<f64>,
    pub verdict: bool,
}

/// Pairs run `i` of A with run `i` of B and applies the majority rule.
pub fn runs_significance(
    runs_a: &[Vec<usize>],
    runs_b: &[Vec<usize>],
    gold: &[usize],
    iterations: usize,
    rng: &mut Rng,
) -> Result<Significance> {
    if runs_a.len() != runs_b.len() || runs_a.is_empty() {
        return Err(Error::invalid(format!(
            "run counts differ or are zero: {} vs {}",
            runs_a.len(),
            runs_b.len()
        )));
    }
    let p_values = runs_a
        .iter()
        .zip(runs_b)
        .map(|(a, b)| approx_rand_test(a, b, gold, iterations, rng))
        .collect::<Result<Vec<_>>>()?;
    let verdict = majority_verdict(&p_values);
    Ok(Significance { p_values, verdict })
}

/// Emoticons counted for the informality analysis.
pub const EMOTICONS: [&str; 6] = [":)", ":(", ":-)", ":-(", ":D", "=)"];

/// Non-overlapping substring counts of each emoticon over raw texts.
pub fn emoticon_counts<'a>(texts: impl IntoIterator<Item = &'a str>) -> [u64; 6] {
    let mut counts = [0u64; 6];
    for text in texts {
        for (c, e) in counts.iter_mut().zip(EMOTICONS) {
            *c += text.matches(e).count() as u64;
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquared {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Upper tail of the χ² distribution.
pub fn chi_squared_sf(x: f64, df: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_ur(df as f64 / 2.0, x / 2.0)
}

/// Pearson χ² test of homogeneity on a 2×k table. Categories absent from
/// both rows are dropped (reducing the degrees of freedom); a row with no
/// counts at all is a degenerate table.
pub fn chi_squared_table(a: &[u64], b: &[u64]) -> Result<ChiSquared> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("{} categories", a.len()), b.len()));
    }
    let (ra, rb): (u64, u64) = (a.iter().sum(), b.iter().sum());
    if ra == 0 || rb == 0 {
        return Err(Error::DegenerateTable {
            a: a.to_vec(),
            b: b.to_vec(),
        });
    }
    let total = (ra + rb) as f64;
    let mut statistic = 0.0;
    let mut used = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        let col = (x + y) as f64;
        if col == 0.0 {
            continue;
        }
        used += 1;
        for (obs, row) in [(x, ra), (y, rb)] {
            let expected = row as f64 * col / total;
            statistic += (obs as f64 - expected).powi(2) / expected;
        }
    }
    let df = used.saturating_sub(1);
    let p_value = if df == 0 { 1.0 } else { chi_squared_sf(statistic, df) };
    Ok(ChiSquared { statistic, df, p_value })
}

/// χ² comparison of emoticon frequencies over all text of two datasets.
pub fn chi_squared_emoticons(a: &DatasetSplit, b: &DatasetSplit) -> Result<ChiSquared> {
    chi_squared_table(&emoticon_counts(a.texts()), &emoticon_counts(b.texts()))
}

/// Gold labels of a dataset's test partition.
pub fn test_gold(data: &DatasetSplit) -> Vec<usize> {
    data.partition(Partition::Test).iter().map(|e| e.label).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[0, 1], &[0, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 1], &[1, 0]).unwrap(), 0.0);
        assert!(accuracy(&[], &[]).is_err());
        assert!(accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn macro_average_cases() {
        assert!((macro_average(&[Some(0.4); 6]).unwrap() - 0.4).abs() < 1e-12);
        assert!(macro_average(&[Some(0.4), None]).is_err());
    }

    #[test]
    fn confusion_cases() {
        assert_eq!(confusion_matrix(&[0, 1], &[0, 1], 2).unwrap(), vec![vec![1, 0], vec![0, 1]]);
        let m = confusion_matrix(&[0, 1, 2, 1], &[0, 0, 0, 0], 3).unwrap();
        assert_eq!(m.iter().map(|r| r[0]).sum::<u64>(), 4);
        assert!(confusion_matrix(&[3], &[0], 3).is_err());
    }

    #[test]
    fn run_statistics() {
        let (m, s) = mean_std(&[0.5, 0.6, 0.7, 0.8, 0.9]).unwrap();
        assert!((m - 0.7).abs() < 1e-12);
        assert!((s - 0.158_113_883_008_418_98).abs() < 1e-12);
        assert_eq!(mean_std(&[0.3; 5]).unwrap().1, 0.0);
    }

    #[test]
    fn randomization_identities() {
        let gold = [0, 1, 1, 0, 1, 0, 0, 1];
        let a = [0, 1, 0, 0, 1, 1, 0, 1];
        let b = [1, 1, 1, 0, 0, 0, 1, 1];
        assert_eq!(approx_rand_test(&a, &a, &gold, 500, &mut seeded(1)).unwrap(), 1.0);
        let pab = approx_rand_test(&a, &b, &gold, 500, &mut seeded(2)).unwrap();
        let pba = approx_rand_test(&b, &a, &gold, 500, &mut seeded(2)).unwrap();
        assert_eq!(pab, pba);
        assert!(approx_rand_test(&a, &b[..3], &gold, 10, &mut seeded(2)).is_err());
    }

    #[test]
    fn majority_rule() {
        assert!(!majority_verdict(&[0.001, 0.001, 0.5, 0.5, 0.5]));
        assert!(majority_verdict(&[0.001, 0.001, 0.005, 0.5, 0.5]));
        assert!(!majority_verdict(&[0.01; 5]));

        let gold: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let wrong: Vec<usize> = gold.iter().map(|g| 1 - g).collect();
        let mut rng = seeded(3);
        let s = runs_significance(&vec![gold.clone(); 5], &vec![wrong; 5], &gold, 1000, &mut rng).unwrap();
        assert!(s.verdict && s.p_values.iter().all(|&p| p == 1.0 / 1001.0));
        let s = runs_significance(&vec![gold.clone(); 5], &vec![gold.clone(); 5], &gold, 100, &mut rng).unwrap();
        assert!(!s.verdict && s.p_values == [1.0; 5]);
        assert!(runs_significance(&vec![gold.clone(); 5], &vec![gold.clone(); 4], &gold, 10, &mut rng).is_err());
    }

    #[test]
    fn chi_squared_cases() {
        let same = chi_squared_table(&[3, 1, 4, 1, 5, 9], &[3, 1, 4, 1, 5, 9]).unwrap();
        assert_eq!((same.statistic, same.p_value, same.df), (0.0, 1.0, 5));
        let dropped = chi_squared_table(&[3, 0, 4], &[1, 0, 2]).unwrap();
        assert_eq!(dropped.df, 1);
        assert!(matches!(chi_squared_table(&[0; 6], &[1; 6]), Err(Error::DegenerateTable { .. })));
        let ab = chi_squared_table(&[10, 2, 3, 0, 1, 4], &[1, 5, 2, 2, 0, 3]).unwrap();
        let ba = chi_squared_table(&[1, 5, 2, 2, 0, 3], &[10, 2, 3, 0, 1, 4]).unwrap();
        assert!((ab.statistic - ba.statistic).abs() < 1e-12);
        assert_eq!(emoticon_counts([":) :-) :D", "=) :( :(", "plain"]), [1, 2, 1, 0, 1, 1]);
    }
}
