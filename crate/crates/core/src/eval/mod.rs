//! Evaluation: embedding validity, downstream classification, clustering
//! with report metrics, and exact nearest-neighbor queries.

pub mod classifier;
pub mod cluster;
pub mod metrics;
pub mod pca;

use std::collections::{BTreeSet, HashSet};

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::augment::{sample_view, AugmentConfig};
use crate::encoder::{encode, encode_all, EncoderDims};
use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::nn::ParamStore;

/// Unit-norm embeddings with their scenario ids and optional label sets.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub ids: Vec<String>,
    pub vectors: Array2<f64>,
    pub label_sets: Option<Vec<BTreeSet<String>>>,
}

impl EmbeddingSet {
    /// Validates invariants: unique ids, one row per id, L2-normalized rows
    /// (tolerance 1e-5).
    pub fn new(
        ids: Vec<String>,
        vectors: Array2<f64>,
        label_sets: Option<Vec<BTreeSet<String>>>,
    ) -> Result<EmbeddingSet> {
        if ids.len() != vectors.nrows() {
            return Err(Error::Eval("one id per embedding row required".into()));
        }
        if let Some(l) = &label_sets {
            if l.len() != ids.len() {
                return Err(Error::Eval("one label set per id required".into()));
            }
        }
        let mut seen = HashSet::new();
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Eval(format!("duplicate id `{id}`")));
            }
        }
        for (i, row) in vectors.rows().into_iter().enumerate() {
            let norm = row.dot(&row).sqrt();
            if (norm - 1.0).abs() > 1e-5 {
                return Err(Error::Eval(format!(
                    "row {i} has norm {norm}, expected unit"
                )));
            }
        }
        Ok(EmbeddingSet {
            ids,
            vectors,
            label_sets,
        })
    }

    /// Normalizes raw embeddings row-wise, rejecting zero-norm rows.
    pub fn from_raw(
        ids: Vec<String>,
        mut vectors: Array2<f64>,
        label_sets: Option<Vec<BTreeSet<String>>>,
    ) -> Result<EmbeddingSet> {
        for (i, mut row) in vectors.rows_mut().into_iter().enumerate() {
            let norm = row.dot(&row).sqrt();
            if !norm.is_finite() || norm < 1e-12 {
                return Err(Error::DegenerateEmbedding(format!(
                    "embedding {i} has norm {norm}"
                )));
            }
            row /= norm;
        }
        EmbeddingSet::new(ids, vectors, label_sets)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Cosine distance `1 - cos(a, b)`; zero-norm inputs compare as distance 1.
pub fn cosine_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na < 1e-12 || nb < 1e-12 {
        return 1.0;
    }
    1.0 - a.dot(&b) / (na * nb)
}

/// Fraction of trials in which a graph's embedding lies strictly closer to
/// its own augmented view than to an independently sampled other graph
/// (cosine distance). Evaluation-mode encoding throughout.
pub fn embedding_validity_rate(
    graphs: &[HeteroGraph],
    params: &ParamStore,
    dims: &EncoderDims,
    augment: &AugmentConfig,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if graphs.len() < 2 {
        return Err(Error::Eval("validity needs at least 2 graphs".into()));
    }
    let base = encode_all(params, dims, graphs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..trials {
        let g1 = rng.random_range(0..graphs.len());
        let g2 = loop {
            let c = rng.random_range(0..graphs.len());
            if c != g1 {
                break c;
            }
        };
        let view = sample_view(&graphs[g1], augment, &mut rng);
        let z_view = encode(params, dims, &view)?;
        let d_aug = cosine_distance(base.row(g1), z_view.view());
        let d_other = cosine_distance(base.row(g1), base.row(g2));
        if d_aug < d_other {
            hits += 1;
        }
    }
    Ok(hits as f64 / trials as f64)
}

/// Exact k-nearest-neighbor query by cosine distance, ascending, ties
/// broken by id order.
pub fn knn_query(set: &EmbeddingSet, query: ArrayView1<f64>, k: usize) -> Result<Vec<(String, f64)>> {
    if set.is_empty() {
        return Err(Error::Eval("empty embedding store".into()));
    }
    if k < 1 || k > set.len() {
        return Err(Error::Eval(format!(
            "k must lie in 1..={}, got {k}",
            set.len()
        )));
    }
    let mut scored: Vec<(usize, f64)> = (0..set.len())
        .map(|i| (i, cosine_distance(set.vectors.row(i), query)))
        .collect();
    scored.sort_by(|a, b| {
        a.1.partial_cmp(&b.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| set.ids[a.0].cmp(&set.ids[b.0]))
    });
    Ok(scored
        .into_iter()
        .take(k)
        .map(|(i, d)| (set.ids[i].clone(), d))
        .collect())
}
