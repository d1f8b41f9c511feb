//! Fixed-length sentence representations for the linear pipelines.

use crate::data::Vocabulary;
use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};

/// Token counts over `vocab`; out-of-vocabulary tokens are ignored.
pub fn bow_features(tokens: &[String], vocab: &Vocabulary) -> Vec<f64> {
    let mut out = vec![0.0; vocab.len()];
    for (c, v) in bow_row(tokens, vocab) {
        out[c] = v;
    }
    out
}

/// Sparse form of [`bow_features`], sorted by column.
pub fn bow_row(tokens: &[String], vocab: &Vocabulary) -> Vec<(usize, f64)> {
    let mut ids: Vec<usize> = tokens.iter().filter_map(|t| vocab.get(t)).collect();
    ids.sort_unstable();
    let mut row: Vec<(usize, f64)> = Vec::new();
    for id in ids {
        match row.last_mut() {
            Some((c, v)) if *c == id => *v += 1.0,
            _ => row.push((id, 1.0)),
        }
    }
    row
}

fn vectors<'a>(tokens: &'a [String], emb: &'a EmbeddingMatrix) -> Result<impl Iterator<Item = std::borrow::Cow<'a, [f64]>>> {
    if tokens.is_empty() {
        return Err(Error::invalid("cannot build features for an empty example"));
    }
    Ok(tokens.iter().map(|t| emb.lookup(t)))
}

/// Mean of the token vectors.
pub fn ave_features(tokens: &[String], emb: &EmbeddingMatrix) -> Result<Vec<f64>> {
    let mut sum = vec![0.0; emb.dim()];
    for v in vectors(tokens, emb)? {
        for (s, x) in sum.iter_mut().zip(v.iter()) {
            *s += x;
        }
    }
    let n = tokens.len() as f64;
    Ok(sum.into_iter().map(|s| s / n).collect())
}

/// Coordinate-wise maximum, minimum and mean, concatenated in that order.
pub fn minmaxavg_features(tokens: &[String], emb: &EmbeddingMatrix) -> Result<Vec<f64>> {
    let d = emb.dim();
    let mut max = vec![f64::NEG_INFINITY; d];
    let mut min = vec![f64::INFINITY; d];
    for v in vectors(tokens, emb)? {
        for k in 0..d {
            max[k] = max[k].max(v[k]);
            min[k] = min[k].min(v[k]);
        }
    }
    let mut out = max;
    out.extend(min);
    out.extend(ave_features(tokens, emb)?);
    Ok(out)
}
