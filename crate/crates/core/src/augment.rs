//! Stochastic graph augmentations: edge dropping, attribute (column)
//! dropping and Gaussian attribute perturbation. Two independently sampled
//! views of the same graph drive both self-supervised objectives.
//!
//! All operations are pure: the input graph is never mutated and repeated
//! application with an identical rng state reproduces the same output.

use ndarray::s;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::graph::{EdgeTable, HeteroGraph};

/// Per-view probabilities for `sample_view` are drawn uniformly from this
/// range.
pub const VIEW_P_RANGE: (f64, f64) = (0.1, 0.2);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Edge-drop probability for direct invocations.
    pub p_edge_drop: f64,
    /// Attribute-column-drop probability for direct invocations.
    pub p_attr_drop: f64,
    /// Attribute-perturbation probability for direct invocations.
    pub p_attr_noise: f64,
    /// Standard deviation of the Gaussian feature noise.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            p_edge_drop: 0.15,
            p_attr_drop: 0.15,
            p_attr_noise: 0.15,
            noise_sigma: 1.0,
            seed: 0,
        }
    }
}

fn filter_edge_table(table: &EdgeTable, keep: &[bool]) -> EdgeTable {
    let dim = table.features.ncols();
    let mut out = EdgeTable::empty(dim);
    let mut rows: Vec<f64> = Vec::new();
    for (i, &k) in keep.iter().enumerate() {
        if !k {
            continue;
        }
        out.src.push(table.src[i]);
        out.dst.push(table.dst[i]);
        if !table.subtypes.is_empty() {
            out.subtypes.push(table.subtypes[i]);
        }
        rows.extend(table.features.row(i).iter().copied());
    }
    out.features = ndarray::Array2::from_shape_vec((out.src.len(), dim), rows)
        .expect("row count matches");
    out
}

/// Removes each edge (across all four tables) independently with
/// probability `p`.
pub fn drop_edges<R: Rng>(g: &HeteroGraph, p: f64, rng: &mut R) -> HeteroGraph {
    let mut out = g.clone();
    for table in [&mut out.o2o, &mut out.r2r, &mut out.o2r, &mut out.temporal] {
        let keep: Vec<bool> = (0..table.len()).map(|_| !rng.random_bool(p)).collect();
        *table = filter_edge_table(table, &keep);
    }
    out
}

/// Column groups that drop atomically: one-hot blocks count as a single
/// column, everything else is per-column.
fn obstacle_column_groups(g: &HeteroGraph) -> Vec<std::ops::Range<usize>> {
    let mut groups: Vec<std::ops::Range<usize>> = (0..9).map(|c| c..c + 1).collect();
    groups.extend(g.config.obstacle_onehot_blocks());
    let pe_start = 15;
    groups.extend((pe_start..g.config.obstacle_feature_dim()).map(|c| c..c + 1));
    groups
}

fn road_column_groups(g: &HeteroGraph) -> Vec<std::ops::Range<usize>> {
    let onehot = g.config.road_onehot_block();
    let mut groups: Vec<std::ops::Range<usize>> = (0..onehot.start).map(|c| c..c + 1).collect();
    groups.push(onehot);
    groups
}

fn continuous_columns(groups: &[std::ops::Range<usize>]) -> Vec<usize> {
    groups
        .iter()
        .filter(|r| r.len() == 1)
        .map(|r| r.start)
        .collect()
}

/// Zeroes whole feature columns (per node type) independently with
/// probability `p`; one-hot blocks are dropped atomically.
pub fn drop_attributes<R: Rng>(g: &HeteroGraph, p: f64, rng: &mut R) -> HeteroGraph {
    let mut out = g.clone();
    for group in obstacle_column_groups(g) {
        if rng.random_bool(p) {
            out.obstacle_features.slice_mut(s![.., group]).fill(0.0);
        }
    }
    for group in road_column_groups(g) {
        if rng.random_bool(p) {
            out.road_features.slice_mut(s![.., group]).fill(0.0);
        }
    }
    out
}

/// Adds i.i.d. `N(0, sigma^2)` noise to each continuous feature column with
/// probability `p`; one-hot columns are never perturbed.
pub fn perturb_attributes<R: Rng>(g: &HeteroGraph, p: f64, sigma: f64, rng: &mut R) -> HeteroGraph {
    let mut out = g.clone();
    if sigma == 0.0 {
        // Keep rng consumption identical so downstream draws never shift.
        let n_cols = continuous_columns(&obstacle_column_groups(g)).len()
            + continuous_columns(&road_column_groups(g)).len();
        for _ in 0..n_cols {
            let _ = rng.random_bool(p);
        }
        return out;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma >= 0");
    for c in continuous_columns(&obstacle_column_groups(g)) {
        if rng.random_bool(p) {
            for v in out.obstacle_features.slice_mut(s![.., c]).iter_mut() {
                *v += normal.sample(rng);
            }
        }
    }
    for c in continuous_columns(&road_column_groups(g)) {
        if rng.random_bool(p) {
            for v in out.road_features.slice_mut(s![.., c]).iter_mut() {
                *v += normal.sample(rng);
            }
        }
    }
    out
}

/// Samples an augmented view: edge dropping, attribute dropping and
/// attribute perturbation in that order, each with an independently drawn
/// probability uniform in [`VIEW_P_RANGE`].
pub fn sample_view<R: Rng>(g: &HeteroGraph, config: &AugmentConfig, rng: &mut R) -> HeteroGraph {
    let (lo, hi) = VIEW_P_RANGE;
    let p_edge = rng.random_range(lo..hi);
    let p_drop = rng.random_range(lo..hi);
    let p_noise = rng.random_range(lo..hi);
    let g = drop_edges(g, p_edge, rng);
    let g = drop_attributes(&g, p_drop, rng);
    perturb_attributes(&g, p_noise, config.noise_sigma, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, BuilderConfig};
    use crate::scenario::synth::{generate_synthetic, Family};
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn test_graph() -> HeteroGraph {
        let s = generate_synthetic(Family::StopAtLight, 1, 5).unwrap().pop().unwrap();
        build_graph(&s, &BuilderConfig::default()).unwrap()
    }

    /// A minimal graph with exactly `n` o2o edges for rate statistics.
    fn many_edge_graph(n: usize) -> HeteroGraph {
        let mut g = test_graph();
        let dim = g.o2o.features.ncols();
        g.o2o.src = vec![0; n];
        g.o2o.dst = vec![1; n];
        g.o2o.subtypes = vec![0; n];
        g.o2o.features = Array2::zeros((n, dim));
        // Nodes 0 and 1 may sit at different timesteps after the rewrite;
        // align them so invariants still hold.
        let t0 = g.obstacle_ts[0];
        g.obstacle_ts[1] = t0;
        g
    }

    #[test]
    fn zero_probability_is_identity() {
        let g = test_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(drop_edges(&g, 0.0, &mut rng), g);
        assert_eq!(drop_attributes(&g, 0.0, &mut rng), g);
        assert_eq!(perturb_attributes(&g, 0.0, 1.0, &mut rng), g);
        assert_eq!(perturb_attributes(&g, 1.0, 0.0, &mut rng), g);
    }

    #[test]
    fn full_edge_drop_empties_all_tables() {
        let g = test_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = drop_edges(&g, 1.0, &mut rng);
        assert!(out.o2o.is_empty() && out.r2r.is_empty());
        assert!(out.o2r.is_empty() && out.temporal.is_empty());
        out.check_invariants().unwrap();
    }

    #[test]
    fn full_attribute_drop_zeroes_features() {
        let g = test_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = drop_attributes(&g, 1.0, &mut rng);
        assert!(out.obstacle_features.iter().all(|v| *v == 0.0));
        assert!(out.road_features.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn edge_drop_rate_concentrates_around_p() {
        // Binomial(10_000, 0.9) keeps the retained fraction within
        // 0.9 +- 0.02 except with probability < 1e-3.
        let g = many_edge_graph(10_000);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let out = drop_edges(&g, 0.1, &mut rng);
        let retained = out.o2o.len() as f64 / 10_000.0;
        assert!((retained - 0.9).abs() < 0.02, "retained {retained}");
    }

    #[test]
    fn column_drop_mask_is_shared_across_nodes() {
        let g = test_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = drop_attributes(&g, 0.5, &mut rng);
        for c in 0..g.obstacle_features.ncols() {
            let zeroed = out
                .obstacle_features
                .column(c)
                .iter()
                .all(|v| *v == 0.0);
            let untouched = out
                .obstacle_features
                .column(c)
                .iter()
                .zip(g.obstacle_features.column(c).iter())
                .all(|(a, b)| a == b);
            assert!(zeroed || untouched, "column {c} partially dropped");
        }
    }

    #[test]
    fn onehot_blocks_drop_atomically() {
        let g = test_graph();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = drop_attributes(&g, 0.5, &mut rng);
            for block in g.config.obstacle_onehot_blocks() {
                let sums: Vec<f64> = out
                    .obstacle_features
                    .rows()
                    .into_iter()
                    .map(|r| r.slice(s![block.clone()]).sum())
                    .collect();
                assert!(
                    sums.iter().all(|s| *s == 0.0) || sums.iter().all(|s| *s == 1.0),
                    "one-hot block {block:?} dropped partially"
                );
            }
        }
    }

    #[test]
    fn injected_noise_mean_is_near_zero() {
        let sigma = 0.5;
        let g = test_graph();
        let mut diffs = Vec::new();
        let mut seed = 0;
        while diffs.len() < 100_000 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let out = perturb_attributes(&g, 1.0, sigma, &mut rng);
            for c in continuous_columns(&obstacle_column_groups(&g)) {
                for (a, b) in out
                    .obstacle_features
                    .column(c)
                    .iter()
                    .zip(g.obstacle_features.column(c).iter())
                {
                    diffs.push(a - b);
                }
            }
            seed += 1;
        }
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let bound = 4.0 * sigma / n.sqrt();
        assert!(mean.abs() < bound, "noise mean {mean} exceeds CLT bound {bound}");
    }

    #[test]
    fn sample_view_is_deterministic_given_rng_state() {
        let g = test_graph();
        let config = AugmentConfig::default();
        let rng = ChaCha8Rng::seed_from_u64(9);
        let a = sample_view(&g, &config, &mut rng.clone());
        let b = sample_view(&g, &config, &mut rng.clone());
        assert_eq!(a, b);
        let mut other = ChaCha8Rng::seed_from_u64(10);
        let c = sample_view(&g, &config, &mut other);
        assert_ne!(a, c, "distinct streams should generally differ");
    }

    #[test]
    fn sample_view_preserves_graph_invariants_and_purity() {
        let g = test_graph();
        let before = g.clone();
        let config = AugmentConfig::default();
        for seed in 0..25 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let view = sample_view(&g, &config, &mut rng);
            view.check_invariants().unwrap();
            assert_eq!(view.n_obstacle_nodes(), g.n_obstacle_nodes());
            assert_eq!(view.n_road_nodes(), g.n_road_nodes());
        }
        assert_eq!(g, before, "input graph must never be mutated");
    }

    #[test]
    fn empirical_drop_rate_matches_p_chi_squared() {
        // Pool many Bernoulli trials and check the drop rate with a
        // two-sided test at significance 1e-3 (|z| < 3.29).
        let g = many_edge_graph(5_000);
        let p = 0.15;
        let mut dropped = 0usize;
        let mut total = 0usize;
        for seed in 0..4 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let out = drop_edges(&g, p, &mut rng);
            dropped += g.o2o.len() - out.o2o.len();
            total += g.o2o.len();
        }
        let n = total as f64;
        let z = (dropped as f64 - n * p) / (n * p * (1.0 - p)).sqrt();
        assert!(z.abs() < 3.29, "drop-rate z-score {z}");
    }
}
