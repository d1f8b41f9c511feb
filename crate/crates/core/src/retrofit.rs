//! Retrofitting word vectors to a semantic lexicon.
//!
//! Given original vectors `q̂` and an undirected lexicon graph, retrofitting
//! looks for vectors `q` minimizing
//!
//! ```text
//! Ψ(Q) = Σ_i α_i ‖q_i − q̂_i‖² + Σ_{{i,j} ∈ E} β̄_ij ‖q_i − q_j‖²
//! ```
//!
//! where each unordered edge is counted once with the symmetrized weight
//! `β̄_ij = (β_ij + β_ji) / 2`. The minimizer over a single `q_i` with all
//! other rows fixed is the weighted mean
//!
//! ```text
//! q_i ← (α_i q̂_i + Σ_j β̄_ij q_j) / (α_i + Σ_j β̄_ij)
//! ```
//!
//! so sweeping this update over the vertices in ascending index order
//! (Gauss–Seidel) never increases Ψ. With a constant β the symmetrized weight
//! is β itself.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Vocabulary;
use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};

/// Undirected graph over vocabulary indices. No self-loops; adjacency lists
/// are sorted and symmetric.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconGraph {
    adjacency: Vec<Vec<usize>>,
}

impl LexiconGraph {
    /// Builds a graph on `num_vertices` vertices. Self-loops are dropped and
    /// duplicate edges merged.
    pub fn from_edges<I>(num_vertices: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut sets = vec![BTreeSet::new(); num_vertices];
        for (a, b) in edges {
            if a >= num_vertices || b >= num_vertices {
                return Err(Error::invalid(format!(
                    "edge ({a}, {b}) outside a graph of {num_vertices} vertices"
                )));
            }
            if a != b {
                sets[a].insert(b);
                sets[b].insert(a);
            }
        }
        Ok(LexiconGraph {
            adjacency: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    /// Each unordered edge once, as `(low, high)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, ns)| ns.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }
}

/// Reads a lexicon with one `word1<TAB>word2` (or space separated) pair per
/// line, keeping only pairs whose words are both in `vocab`.
pub fn load_lexicon(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<LexiconGraph> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut edges = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = if line.contains('\t') {
            line.split('\t').map(str::trim).collect()
        } else {
            line.split_whitespace().collect()
        };
        let [a, b] = fields[..] else {
            return Err(Error::parse(
                path,
                idx + 1,
                format!("expected two words, found {}", fields.len()),
            ));
        };
        if let (Some(a), Some(b)) = (vocab.get(a), vocab.get(b)) {
            edges.push((a, b));
        }
    }
    LexiconGraph::from_edges(vocab.len(), edges)
}

/// Edge weight rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EdgeWeight {
    /// β_ij = 1 / degree(i).
    InverseDegree,
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrofitConfig {
    pub iterations: usize,
    /// Weight α_i tying every word to its original vector.
    pub alpha: f64,
    pub beta: EdgeWeight,
}

impl Default for RetrofitConfig {
    fn default() -> Self {
        RetrofitConfig {
            iterations: 10,
            alpha: 1.0,
            beta: EdgeWeight::InverseDegree,
        }
    }
}

impl RetrofitConfig {
    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha must be positive"));
        }
        if let EdgeWeight::Constant(b) = self.beta {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::invalid("beta must be positive"));
            }
        }
        Ok(())
    }

    fn directed_weight(&self, graph: &LexiconGraph, i: usize) -> f64 {
        match self.beta {
            EdgeWeight::InverseDegree => 1.0 / graph.degree(i) as f64,
            EdgeWeight::Constant(b) => b,
        }
    }

    /// Symmetrized weight β̄_ij used by both the objective and the update.
    pub fn edge_weight(&self, graph: &LexiconGraph, i: usize, j: usize) -> f64 {
        match self.beta {
            EdgeWeight::Constant(b) => b,
            EdgeWeight::InverseDegree => {
                0.5 * (self.directed_weight(graph, i) + self.directed_weight(graph, j))
            }
        }
    }
}

fn check_shapes(q: &[f64], q_hat: &[f64], dim: usize, graph: &LexiconGraph) -> Result<()> {
    if q.len() != q_hat.len() {
        return Err(Error::shape(
            format!("{} values", q_hat.len()),
            format!("{} values", q.len()),
        ));
    }
    if dim == 0 || q.len() != graph.num_vertices() * dim {
        return Err(Error::shape(
            format!("{}x{dim}", graph.num_vertices()),
            format!("{} values", q.len()),
        ));
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Ψ(Q) for row-major `q` and `q_hat` with `dim` columns.
pub fn retrofit_objective(
    q: &[f64],
    q_hat: &[f64],
    dim: usize,
    graph: &LexiconGraph,
    config: &RetrofitConfig,
) -> Result<f64> {
    check_shapes(q, q_hat, dim, graph)?;
    config.validate()?;
    let row = |i: usize| i * dim..(i + 1) * dim;
    let anchor: f64 = (0..graph.num_vertices())
        .map(|i| config.alpha * sq_dist(&q[row(i)], &q_hat[row(i)]))
        .sum();
    let edges: f64 = graph
        .edges()
        .map(|(i, j)| config.edge_weight(graph, i, j) * sq_dist(&q[row(i)], &q[row(j)]))
        .sum();
    Ok(anchor + edges)
}

/// Performs one Gauss–Seidel sweep in place. Isolated vertices are skipped,
/// leaving their rows bitwise untouched.
pub fn retrofit_sweep(
    q: &mut [f64],
    q_hat: &[f64],
    dim: usize,
    graph: &LexiconGraph,
    config: &RetrofitConfig,
) {
    let mut acc = vec![0.0; dim];
    for i in 0..graph.num_vertices() {
        let neighbors = graph.neighbors(i);
        if neighbors.is_empty() {
            continue;
        }
        for (a, &h) in acc.iter_mut().zip(&q_hat[i * dim..(i + 1) * dim]) {
            *a = config.alpha * h;
        }
        let mut denom = config.alpha;
        for &j in neighbors {
            let w = config.edge_weight(graph, i, j);
            denom += w;
            for (a, &v) in acc.iter_mut().zip(&q[j * dim..(j + 1) * dim]) {
                *a += w * v;
            }
        }
        for (dst, a) in q[i * dim..(i + 1) * dim].iter_mut().zip(&acc) {
            *dst = a / denom;
        }
    }
}

/// Runs `config.iterations` sweeps starting from the original vectors.
pub fn retrofit_matrix(
    q_hat: &[f64],
    dim: usize,
    graph: &LexiconGraph,
    config: &RetrofitConfig,
) -> Result<Vec<f64>> {
    check_shapes(q_hat, q_hat, dim, graph)?;
    config.validate()?;
    let mut q = q_hat.to_vec();
    for _ in 0..config.iterations {
        retrofit_sweep(&mut q, q_hat, dim, graph, config);
    }
    Ok(q)
}

/// Retrofits every row of `matrix`; the graph must be indexed by the
/// matrix's vocabulary.
pub fn retrofit_embeddings(
    matrix: &EmbeddingMatrix,
    graph: &LexiconGraph,
    config: &RetrofitConfig,
) -> Result<EmbeddingMatrix> {
    if graph.num_vertices() != matrix.len() {
        return Err(Error::shape(
            format!("graph over {} words", matrix.len()),
            format!("{} vertices", graph.num_vertices()),
        ));
    }
    let data = retrofit_matrix(matrix.data(), matrix.dim(), graph, config)?;
    EmbeddingMatrix::new(matrix.vocab().clone(), matrix.dim(), data, matrix.oov_seed())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> RetrofitConfig {
        RetrofitConfig {
            iterations: 10,
            alpha: 1.0,
            beta: EdgeWeight::Constant(1.0),
        }
    }

    #[test]
    fn lexicon_dedup_and_restriction() {
        let vocab = Vocabulary::from_entries(["a", "b", "c"].map(|w| (w.to_string(), 1))).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lex.txt");
        fs::write(&path, "a\tb\nb a\na a\nc zebra\n").unwrap();
        let g = load_lexicon(&path, &vocab).unwrap();
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1)]);

        fs::write(&path, "").unwrap();
        assert_eq!(load_lexicon(&path, &vocab).unwrap().num_edges(), 0);

        fs::write(&path, "a b\nonly\n").unwrap();
        assert!(matches!(
            load_lexicon(&path, &vocab),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn objective_hand_values() {
        let g = LexiconGraph::from_edges(2, [(0, 1)]).unwrap();
        let q_hat = [0.0, 3.0];
        assert_eq!(retrofit_objective(&q_hat, &q_hat, 1, &g, &unit()).unwrap(), 9.0);

        let flat = [2.0, 2.0];
        assert_eq!(retrofit_objective(&flat, &flat, 1, &g, &unit()).unwrap(), 0.0);

        let doubled = RetrofitConfig {
            beta: EdgeWeight::Constant(2.0),
            ..unit()
        };
        assert_eq!(retrofit_objective(&q_hat, &q_hat, 1, &g, &doubled).unwrap(), 18.0);

        assert!(retrofit_objective(&[0.0], &q_hat, 1, &g, &unit()).is_err());
    }

    #[test]
    fn two_node_chain_gauss_seidel_error() {
        // Fixed point of q1 = q2/2, q2 = (3 + q1)/2 is (1, 2). Starting from
        // q̂ the sweep-k errors are 0.5·4^(1−k) and 0.25·4^(1−k).
        let g = LexiconGraph::from_edges(2, [(0, 1)]).unwrap();
        let q_hat = [0.0, 3.0];
        let mut q = q_hat.to_vec();
        for k in 1..=12 {
            retrofit_sweep(&mut q, &q_hat, 1, &g, &unit());
            let scale = 4f64.powi(1 - k);
            assert!(((q[0] - 1.0).abs() - 0.5 * scale).abs() < 1e-15);
            assert!(((q[1] - 2.0).abs() - 0.25 * scale).abs() < 1e-15);
        }
        assert!((q[0] - 1.0).abs() < 1e-6 && (q[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn empty_graph_and_zero_iterations_are_identity() {
        let q_hat = vec![0.5, -1.0, 2.0, 7.0];
        let empty = LexiconGraph::from_edges(2, []).unwrap();
        assert_eq!(retrofit_matrix(&q_hat, 2, &empty, &unit()).unwrap(), q_hat);
        let g = LexiconGraph::from_edges(2, [(0, 1)]).unwrap();
        let none = RetrofitConfig {
            iterations: 0,
            ..unit()
        };
        assert_eq!(retrofit_matrix(&q_hat, 2, &g, &none).unwrap(), q_hat);
    }

    fn random_instance() -> impl Strategy<Value = (usize, usize, Vec<(usize, usize)>, Vec<f64>)> {
        (2usize..20, 1usize..4).prop_flat_map(|(n, dim)| {
            (
                Just(n),
                Just(dim),
                prop::collection::vec((0..n, 0..n), 0..3 * n),
                prop::collection::vec(-5.0f64..5.0, n * dim),
            )
        })
    }

    proptest! {
        #[test]
        fn sweeps_never_increase_objective((n, dim, edges, q_hat) in random_instance(),
                                           inverse in any::<bool>()) {
            let g = LexiconGraph::from_edges(n, edges).unwrap();
            let cfg = RetrofitConfig {
                beta: if inverse { EdgeWeight::InverseDegree } else { EdgeWeight::Constant(1.0) },
                ..unit()
            };
            let mut q = q_hat.clone();
            let mut prev = retrofit_objective(&q, &q_hat, dim, &g, &cfg).unwrap();
            for _ in 0..10 {
                retrofit_sweep(&mut q, &q_hat, dim, &g, &cfg);
                let cur = retrofit_objective(&q, &q_hat, dim, &g, &cfg).unwrap();
                prop_assert!(cur <= prev * (1.0 + 1e-12) + 1e-12);
                prev = cur;
            }
        }

        #[test]
        fn updates_are_convex_combinations((n, dim, edges, q_hat) in random_instance()) {
            let g = LexiconGraph::from_edges(n, edges).unwrap();
            let cfg = RetrofitConfig::default();
            let mut q = q_hat.clone();
            // Check a single sweep coordinate by coordinate against the values
            // each update could see.
            for i in 0..n {
                if g.degree(i) == 0 { continue; }
                let before = q.clone();
                let mut lo = vec![f64::INFINITY; dim];
                let mut hi = vec![f64::NEG_INFINITY; dim];
                let sources = std::iter::once(&q_hat[i*dim..(i+1)*dim])
                    .chain(g.neighbors(i).iter().map(|&j| &before[j*dim..(j+1)*dim]));
                for src in sources {
                    for d in 0..dim {
                        lo[d] = lo[d].min(src[d]);
                        hi[d] = hi[d].max(src[d]);
                    }
                }
                // Sweep restricted to vertex i.
                let mut acc = vec![0.0; dim];
                let mut denom = cfg.alpha;
                for d in 0..dim { acc[d] = cfg.alpha * q_hat[i*dim+d]; }
                for &j in g.neighbors(i) {
                    let w = cfg.edge_weight(&g, i, j);
                    denom += w;
                    for d in 0..dim { acc[d] += w * before[j*dim+d]; }
                }
                for d in 0..dim {
                    q[i*dim+d] = acc[d] / denom;
                    prop_assert!(q[i*dim+d] >= lo[d] - 1e-12 && q[i*dim+d] <= hi[d] + 1e-12);
                }
            }
            // The library sweep agrees with the coordinate-wise replay above.
            let mut lib = q_hat.clone();
            retrofit_sweep(&mut lib, &q_hat, dim, &g, &cfg);
            for (a, b) in lib.iter().zip(&q) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn isolated_rows_are_bitwise_unchanged((n, dim, edges, q_hat) in random_instance()) {
            let g = LexiconGraph::from_edges(n, edges).unwrap();
            let q = retrofit_matrix(&q_hat, dim, &g, &RetrofitConfig::default()).unwrap();
            for i in (0..n).filter(|&i| g.degree(i) == 0) {
                for d in 0..dim {
                    prop_assert_eq!(q[i*dim+d].to_bits(), q_hat[i*dim+d].to_bits());
                }
            }
        }

        #[test]
        fn converged_result_is_permutation_equivariant(
            (n, dim, edges, q_hat) in random_instance(), shift in 1usize..50
        ) {
            // Sweep order follows vertex indices, so equality holds at the
            // fixed point rather than after a fixed number of sweeps.
            let perm: Vec<usize> = (0..n).map(|i| (i * 7 + shift) % n).collect();
            let is_perm = {
                let mut s = perm.clone(); s.sort(); s.dedup(); s.len() == n
            };
            prop_assume!(is_perm);
            let cfg = RetrofitConfig { iterations: 400, ..RetrofitConfig::default() };
            let g = LexiconGraph::from_edges(n, edges.clone()).unwrap();
            let gp = LexiconGraph::from_edges(n, edges.iter().map(|&(a, b)| (perm[a], perm[b]))).unwrap();
            let mut q_hat_p = vec![0.0; n * dim];
            for i in 0..n {
                q_hat_p[perm[i]*dim..(perm[i]+1)*dim].copy_from_slice(&q_hat[i*dim..(i+1)*dim]);
            }
            let q = retrofit_matrix(&q_hat, dim, &g, &cfg).unwrap();
            let qp = retrofit_matrix(&q_hat_p, dim, &gp, &cfg).unwrap();
            for i in 0..n {
                for d in 0..dim {
                    prop_assert!((q[i*dim+d] - qp[perm[i]*dim+d]).abs() < 1e-9);
                }
            }
        }
    }
}
