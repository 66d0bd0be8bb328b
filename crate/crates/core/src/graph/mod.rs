//! Heterogeneous spatio-temporal scenario graphs.
//!
//! Obstacle nodes are temporally unrolled (one node per obstacle per
//! timestep), road segments become map nodes, and four typed edge sets
//! carry subtype one-hots plus relative-geometry features. All coordinates
//! are stored relative to the scenario reference point (the median obstacle
//! position), which makes the representation translation invariant.

pub mod build;
pub mod cache;
pub mod geom;

pub use build::{build_graph, classify_o2o_subtype, reference_point, sinusoidal_pe, O2oContext};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Obstacle-to-obstacle edge subtypes, in one-hot order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum O2oSubtype {
    Behind,
    InFront,
    Left,
    Right,
    SameLane,
    MustYieldRow,
    MustYieldTl,
    Other,
}

impl O2oSubtype {
    pub const COUNT: usize = 8;

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Obstacle-to-road edge subtypes, in one-hot order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum O2rSubtype {
    IsOn,
    IsClose,
}

impl O2rSubtype {
    pub const COUNT: usize = 2;

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Graph construction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuilderConfig {
    /// Maximum number of past timesteps a temporal edge may span.
    pub temporal_reach: u32,
    /// Pair-creation radius for obstacle-to-obstacle edges, meters.
    pub o2o_radius: f64,
    /// Road segments are kept when within this buffer of the obstacle
    /// bounding box, meters.
    pub road_buffer: f64,
    /// Number of arclength-uniform centerline samples per road node.
    pub centerline_points: usize,
    /// Sinusoidal positional-encoding width (even).
    pub pe_dim: usize,
}

impl Default for BuilderConfig {
    fn default() -> Self {
        BuilderConfig {
            temporal_reach: 4,
            o2o_radius: 50.0,
            road_buffer: 100.0,
            centerline_points: 10,
            pe_dim: 16,
        }
    }
}

impl BuilderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.temporal_reach < 1 {
            return Err(Error::Config("temporal_reach must be >= 1".into()));
        }
        if self.o2o_radius <= 0.0 || self.road_buffer <= 0.0 {
            return Err(Error::Config("distances must be positive".into()));
        }
        if self.centerline_points < 2 {
            return Err(Error::Config("centerline_points must be >= 2".into()));
        }
        if self.pe_dim % 2 != 0 || self.pe_dim == 0 {
            return Err(Error::Config("pe_dim must be even and positive".into()));
        }
        Ok(())
    }

    /// 9 continuous + 4 type one-hot + 2 role one-hot + positional encoding.
    pub fn obstacle_feature_dim(&self) -> usize {
        9 + 4 + 2 + self.pe_dim
    }

    /// Interleaved centerline samples + per-sample widths + 3 type one-hot.
    pub fn road_feature_dim(&self) -> usize {
        3 * self.centerline_points + 3
    }

    /// Column ranges of one-hot blocks in obstacle features.
    pub fn obstacle_onehot_blocks(&self) -> [std::ops::Range<usize>; 2] {
        [9..13, 13..15]
    }

    pub fn road_onehot_block(&self) -> std::ops::Range<usize> {
        let c = 3 * self.centerline_points;
        c..c + 3
    }

    /// Stable hash of the config, used to key graph caches.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        let mut out = String::with_capacity(16);
        for b in digest.iter().take(8) {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }
}

/// Per-relation edge dimensions (geometry features + subtype one-hot).
pub const O2O_EDGE_DIM: usize = 7 + O2oSubtype::COUNT;
pub const R2R_EDGE_DIM: usize = 2 + 8;
pub const O2R_EDGE_DIM: usize = 2 + O2rSubtype::COUNT;
pub const TEMPORAL_EDGE_DIM: usize = 3;

/// One typed edge set: parallel source/target index arrays, a dense
/// feature matrix and a subtype id per edge (empty for temporal edges).
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTable {
    pub src: Vec<u32>,
    pub dst: Vec<u32>,
    pub features: Array2<f64>,
    pub subtypes: Vec<u8>,
}

impl EdgeTable {
    pub fn empty(dim: usize) -> EdgeTable {
        EdgeTable {
            src: Vec::new(),
            dst: Vec::new(),
            features: Array2::zeros((0, dim)),
            subtypes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

/// A heterogeneous spatio-temporal graph for one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGraph {
    pub scenario_id: String,
    /// Median obstacle position the coordinates are relative to.
    pub reference_point: (f64, f64),
    pub config: BuilderConfig,

    /// Obstacle node features, one row per (obstacle, timestep).
    pub obstacle_features: Array2<f64>,
    /// Parallel arrays: owning obstacle id and timestep per obstacle node.
    pub obstacle_ids: Vec<String>,
    pub obstacle_ts: Vec<u32>,

    /// Road node features, one row per included road segment.
    pub road_features: Array2<f64>,
    pub road_ids: Vec<String>,

    /// Obstacle-to-obstacle edges at a shared timestep.
    pub o2o: EdgeTable,
    /// Road-to-road edges from declared connections or geometric crossings.
    pub r2r: EdgeTable,
    /// Obstacle-to-road edges (is_on / is_close), stored obstacle -> road.
    pub o2r: EdgeTable,
    /// Past -> present edges between nodes of the same obstacle.
    pub temporal: EdgeTable,
}

impl HeteroGraph {
    pub fn n_obstacle_nodes(&self) -> usize {
        self.obstacle_ids.len()
    }

    pub fn n_road_nodes(&self) -> usize {
        self.road_ids.len()
    }

    pub fn n_edges(&self) -> usize {
        self.o2o.len() + self.r2r.len() + self.o2r.len() + self.temporal.len()
    }

    /// Structural invariants that must hold for any graph, including
    /// augmented ones: index ranges, no same-timestep self-loops, temporal
    /// edges within reach on a single obstacle, and finite features.
    pub fn check_invariants(&self) -> Result<()> {
        let n_obs = self.n_obstacle_nodes() as u32;
        let n_road = self.n_road_nodes() as u32;
        let bad = |msg: String| Err(Error::Graph(format!("{}: {msg}", self.scenario_id)));

        for (name, table, src_max, dst_max) in [
            ("o2o", &self.o2o, n_obs, n_obs),
            ("r2r", &self.r2r, n_road, n_road),
            ("o2r", &self.o2r, n_obs, n_road),
            ("temporal", &self.temporal, n_obs, n_obs),
        ] {
            if table.src.len() != table.dst.len()
                || table.features.nrows() != table.src.len()
                || (!table.subtypes.is_empty() && table.subtypes.len() != table.src.len())
            {
                return bad(format!("{name}: ragged edge table"));
            }
            if table.src.iter().any(|s| *s >= src_max) || table.dst.iter().any(|d| *d >= dst_max) {
                return bad(format!("{name}: edge index out of range"));
            }
        }
        for (s, d) in self.o2o.src.iter().zip(&self.o2o.dst) {
            if s == d {
                return bad("o2o: self-loop".into());
            }
            if self.obstacle_ts[*s as usize] != self.obstacle_ts[*d as usize] {
                return bad("o2o: edge across timesteps".into());
            }
        }
        for (s, d) in self.temporal.src.iter().zip(&self.temporal.dst) {
            let (s, d) = (*s as usize, *d as usize);
            if self.obstacle_ids[s] != self.obstacle_ids[d] {
                return bad("temporal: edge across obstacles".into());
            }
            let dt = self.obstacle_ts[d] as i64 - self.obstacle_ts[s] as i64;
            if dt < 1 || dt > self.config.temporal_reach as i64 {
                return bad(format!("temporal: span {dt} outside reach"));
            }
        }
        for m in [&self.obstacle_features, &self.road_features] {
            if m.iter().any(|v| !v.is_finite()) {
                return bad("non-finite node feature".into());
            }
        }
        for t in [&self.o2o, &self.r2r, &self.o2r, &self.temporal] {
            if t.features.iter().any(|v| !v.is_finite()) {
                return bad("non-finite edge feature".into());
            }
        }
        Ok(())
    }

    /// Builder-output property: every one-hot block sums to exactly 1.
    /// (Augmentations may invalidate this.)
    pub fn check_onehot_sums(&self) -> Result<()> {
        let blocks = self.config.obstacle_onehot_blocks();
        for row in self.obstacle_features.rows() {
            for b in &blocks {
                let s: f64 = row.slice(ndarray::s![b.clone()]).sum();
                if (s - 1.0).abs() > 1e-12 {
                    return Err(Error::Graph("obstacle one-hot block sum != 1".into()));
                }
            }
        }
        let rb = self.config.road_onehot_block();
        for row in self.road_features.rows() {
            let s: f64 = row.slice(ndarray::s![rb.clone()]).sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::Graph("road one-hot block sum != 1".into()));
            }
        }
        for (table, base, count) in [
            (&self.o2o, 7usize, O2oSubtype::COUNT),
            (&self.r2r, 2, 8),
            (&self.o2r, 2, O2rSubtype::COUNT),
        ] {
            for row in table.features.rows() {
                let s: f64 = row.slice(ndarray::s![base..base + count]).sum();
                if (s - 1.0).abs() > 1e-12 {
                    return Err(Error::Graph("edge one-hot block sum != 1".into()));
                }
            }
        }
        Ok(())
    }
}
