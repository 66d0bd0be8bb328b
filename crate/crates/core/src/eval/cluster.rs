//! Density-based clustering over embeddings with report assembly.
//!
//! The HDBSCAN algorithm itself is delegated to the `hdbscan` crate
//! (Euclidean metric, noise labeled -1); this module owns parameter
//! mapping, primary-label election, the accuracy/silhouette metrics and
//! the sweep over `min_cluster_size`.

use std::collections::{BTreeMap, HashMap};

use hdbscan::{Hdbscan, HdbscanHyperParams, NnAlgorithm};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::{multilabel_acc, silhouette_clustered};
use crate::eval::EmbeddingSet;

/// Silhouette over the clustered subset, or an explicit degenerate status
/// (never silently 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
pub enum SilhouetteOutcome {
    Ok(f64),
    Degenerate(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub min_cluster_size: usize,
    pub ids: Vec<String>,
    /// Per-id cluster index; -1 marks unclustered (noise) points.
    pub assignment: Vec<i32>,
    pub num_clusters: usize,
    pub unclustered_ratio: f64,
    /// Most frequent member label per cluster (ties broken
    /// lexicographically); empty when the embedding set carries no labels.
    pub primary_labels: BTreeMap<i32, String>,
    pub multilabel_acc: Option<f64>,
    pub silhouette: SilhouetteOutcome,
}

/// Runs HDBSCAN at one `min_cluster_size` and assembles the report.
pub fn cluster(set: &EmbeddingSet, min_cluster_size: usize) -> Result<ClusterReport> {
    if min_cluster_size < 2 {
        return Err(Error::Eval("min_cluster_size must be >= 2".into()));
    }
    if set.len() < min_cluster_size {
        return Err(Error::Eval(format!(
            "{} embeddings cannot support min_cluster_size {min_cluster_size}",
            set.len()
        )));
    }
    let data: Vec<Vec<f64>> = set
        .vectors
        .rows()
        .into_iter()
        .map(|r| r.to_vec())
        .collect();
    let params = HdbscanHyperParams::builder()
        .min_cluster_size(min_cluster_size)
        .allow_single_cluster(true)
        .nn_algorithm(NnAlgorithm::BruteForce)
        .build();
    let assignment = Hdbscan::new(&data, params)
        .cluster()
        .map_err(|e| Error::Eval(format!("hdbscan: {e:?}")))?;

    let mut clusters: Vec<i32> = assignment.iter().copied().filter(|c| *c >= 0).collect();
    clusters.sort_unstable();
    clusters.dedup();
    let num_clusters = clusters.len();
    let noise = assignment.iter().filter(|c| **c < 0).count();
    let unclustered_ratio = noise as f64 / assignment.len() as f64;

    let mut primary_labels = BTreeMap::new();
    let mut acc = None;
    if let Some(label_sets) = &set.label_sets {
        for &c in &clusters {
            // Label frequency over member label sets; lexicographic
            // tie-break via BTreeMap iteration order.
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for (i, a) in assignment.iter().enumerate() {
                if *a != c {
                    continue;
                }
                for l in &label_sets[i] {
                    *counts.entry(l.as_str()).or_default() += 1;
                }
            }
            if let Some((label, _)) = counts.iter().max_by(|a, b| {
                a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)) // highest count, then smallest label
            }) {
                primary_labels.insert(c, label.to_string());
            }
        }
        if num_clusters > 0 {
            let primary_map: HashMap<i32, String> = primary_labels
                .iter()
                .map(|(k, v)| (*k, v.clone()))
                .collect();
            acc = Some(multilabel_acc(&assignment, label_sets, &primary_map)?);
        }
    }

    let silhouette = match silhouette_clustered(&set.vectors, &assignment) {
        Ok(v) => SilhouetteOutcome::Ok(v),
        Err(e) => SilhouetteOutcome::Degenerate(e.to_string()),
    };

    Ok(ClusterReport {
        min_cluster_size,
        ids: set.ids.clone(),
        assignment,
        num_clusters,
        unclustered_ratio,
        primary_labels,
        multilabel_acc: acc,
        silhouette,
    })
}

/// Clusters at every `min_cluster_size` in the sweep, in order.
pub fn cluster_sweep(set: &EmbeddingSet, sweep: &[usize]) -> Result<Vec<ClusterReport>> {
    sweep.iter().map(|mcs| cluster(set, *mcs)).collect()
}

/// Writes per-cluster member lists as `cluster,scenario_id` CSV rows.
pub fn write_member_csv(path: &std::path::Path, report: &ClusterReport) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "cluster,scenario_id")?;
    for (id, c) in report.ids.iter().zip(&report.assignment) {
        writeln!(w, "{c},{id}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    /// Two far-separated Gaussian blobs on the unit sphere.
    fn two_blobs(n_per: usize, sigma: f64, seed: u64) -> EmbeddingSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = 16;
        let mut centers = Vec::new();
        for axis in [0usize, 8] {
            let mut c = vec![0.0; dim];
            c[axis] = 1.0;
            centers.push(c);
        }
        let mut rows = Vec::new();
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        for (b, center) in centers.iter().enumerate() {
            for i in 0..n_per {
                let mut v: Vec<f64> = center
                    .iter()
                    .map(|c| c + rng.random_range(-sigma..sigma))
                    .collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter_mut().for_each(|x| *x /= norm);
                rows.extend(v);
                ids.push(format!("blob{b}-{i}"));
                let mut set = BTreeSet::new();
                set.insert(format!("label{b}"));
                labels.push(set);
            }
        }
        let vectors = Array2::from_shape_vec((2 * n_per, dim), rows).unwrap();
        EmbeddingSet::new(ids, vectors, Some(labels)).unwrap()
    }

    #[test]
    fn two_blob_oracle_yields_two_clusters() {
        let set = two_blobs(50, 0.01, 7);
        let report = cluster(&set, 10).unwrap();
        assert_eq!(report.num_clusters, 2, "{report:?}");
        assert!(report.unclustered_ratio <= 0.05, "{}", report.unclustered_ratio);
        assert_eq!(report.multilabel_acc, Some(1.0));
        match report.silhouette {
            SilhouetteOutcome::Ok(s) => assert!(s > 0.8, "silhouette {s}"),
            ref other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn identical_points_collapse_to_single_cluster_with_sentinel() {
        let n = 30;
        let dim = 8;
        let mut v = Array2::zeros((n, dim));
        for i in 0..n {
            v[(i, 0)] = 1.0;
        }
        let ids = (0..n).map(|i| format!("p{i}")).collect();
        let set = EmbeddingSet::new(ids, v, None).unwrap();
        let report = cluster(&set, 5).unwrap();
        assert_eq!(report.num_clusters, 1, "{report:?}");
        assert!(matches!(report.silhouette, SilhouetteOutcome::Degenerate(_)));
    }

    #[test]
    fn rejects_mcs_larger_than_population() {
        let set = two_blobs(5, 0.01, 1);
        assert!(cluster(&set, 11).is_err());
        assert!(cluster(&set, 1).is_err());
    }

    #[test]
    fn primary_label_tie_breaks_lexicographically() {
        // One tight blob whose members carry {b} and {a} equally often.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 12;
        let dim = 4;
        let mut rows = Vec::new();
        for _ in 0..n {
            let mut v = [1.0, 0.0, 0.0, 0.0];
            for x in v.iter_mut() {
                *x += rng.random_range(-0.01..0.01);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            rows.extend(v.iter().map(|x| x / norm));
        }
        let vectors = Array2::from_shape_vec((n, dim), rows).unwrap();
        let ids = (0..n).map(|i| format!("p{i}")).collect();
        let labels: Vec<BTreeSet<String>> = (0..n)
            .map(|i| {
                let mut s = BTreeSet::new();
                s.insert(if i % 2 == 0 { "b".to_string() } else { "a".to_string() });
                s
            })
            .collect();
        let set = EmbeddingSet::new(ids, vectors, Some(labels)).unwrap();
        let report = cluster(&set, 5).unwrap();
        assert_eq!(report.num_clusters, 1);
        assert_eq!(report.primary_labels.values().next().map(|s| s.as_str()), Some("a"));
    }

    #[test]
    fn report_roundtrips_through_json() {
        let set = two_blobs(20, 0.01, 9);
        let report = cluster(&set, 5).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        let back: ClusterReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }
}
