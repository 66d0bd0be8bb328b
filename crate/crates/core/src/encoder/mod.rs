//! Heterogeneous graph encoder.
//!
//! Three message-passing layers, each with one edge-feature SAGE
//! convolution per relation. Per layer, every relation consumes the
//! previous layer's node features in parallel; obstacle nodes average the
//! outputs of their three incoming relations (obstacle-to-obstacle,
//! temporal, road-to-obstacle), road nodes take the road-to-road output.
//! Each update is followed by batch norm and ReLU (no ReLU after the last
//! layer). Min/max/mean pooling over obstacle nodes feeds a final linear
//! layer producing the 128-d graph embedding.
//!
//! The road-to-obstacle relation runs over reversed obstacle-to-road edges
//! so map context reaches the pooled obstacle embeddings.

pub mod checkpoint;

use std::collections::HashMap;
use std::rc::Rc;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    BuilderConfig, HeteroGraph, O2R_EDGE_DIM, O2O_EDGE_DIM, R2R_EDGE_DIM, TEMPORAL_EDGE_DIM,
};
use crate::nn::{glorot_uniform, ParamStore, Tape, Var};

/// Hidden widths per layer and head sizes. Fixed for this architecture;
/// echoed into checkpoints so stored parameters are self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderDims {
    pub obstacle_hidden: [usize; 3],
    pub road_hidden: [usize; 3],
    pub embedding_dim: usize,
    pub predictor_hidden: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for EncoderDims {
    fn default() -> Self {
        EncoderDims {
            obstacle_hidden: [32, 64, 128],
            road_hidden: [64, 128, 256],
            embedding_dim: 128,
            predictor_hidden: 512,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }
}

pub const EMBEDDING_DIM: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

/// Batch statistics produced by one train-mode forward, folded into the
/// running buffers by [`apply_bn_updates`].
pub struct BnUpdate {
    pub prefix: String,
    pub mean: Array2<f64>,
    pub var: Array2<f64>,
    pub rows: usize,
}

const RELATIONS: [(&str, usize); 4] = [
    ("o2o", O2O_EDGE_DIM),
    ("temp", TEMPORAL_EDGE_DIM),
    ("r2o", O2R_EDGE_DIM),
    ("r2r", R2R_EDGE_DIM),
];

/// Creates all encoder, predictor and projector parameters with Glorot
/// uniform weights, zero biases, identity batch-norm and unit running
/// variance. Deterministic in `seed`.
pub fn init_params(builder: &BuilderConfig, dims: &EncoderDims, seed: u64) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let obs_in = [
        builder.obstacle_feature_dim(),
        dims.obstacle_hidden[0],
        dims.obstacle_hidden[1],
    ];
    let road_in = [
        builder.road_feature_dim(),
        dims.road_hidden[0],
        dims.road_hidden[1],
    ];

    for l in 0..3 {
        let (d_obs_in, d_obs_out) = (obs_in[l], dims.obstacle_hidden[l]);
        let (d_road_in, d_road_out) = (road_in[l], dims.road_hidden[l]);
        for (rel, edge_dim) in RELATIONS {
            let (d_tgt, d_src, d_out) = match rel {
                "o2o" | "temp" => (d_obs_in, d_obs_in, d_obs_out),
                "r2o" => (d_obs_in, d_road_in, d_obs_out),
                _ => (d_road_in, d_road_in, d_road_out),
            };
            let prefix = format!("enc.l{}.{rel}", l + 1);
            store.insert(
                &format!("{prefix}.w1"),
                glorot_uniform(&mut rng, d_out, d_tgt, d_tgt, d_out),
                true,
            );
            store.insert(
                &format!("{prefix}.w2"),
                glorot_uniform(&mut rng, d_out, d_src, d_src, d_out),
                true,
            );
            store.insert(
                &format!("{prefix}.we"),
                glorot_uniform(&mut rng, d_src, edge_dim, edge_dim, d_src),
                true,
            );
            store.insert(&format!("{prefix}.b"), Array2::zeros((1, d_out)), true);
        }
        for (ty, d) in [("obs", d_obs_out), ("road", d_road_out)] {
            let prefix = format!("enc.bn{}.{ty}", l + 1);
            store.insert(&format!("{prefix}.gamma"), Array2::ones((1, d)), true);
            store.insert(&format!("{prefix}.beta"), Array2::zeros((1, d)), true);
            store.insert(&format!("{prefix}.running_mean"), Array2::zeros((1, d)), false);
            store.insert(&format!("{prefix}.running_var"), Array2::ones((1, d)), false);
        }
    }

    let pooled = 3 * dims.embedding_dim;
    store.insert(
        "enc.pool.w",
        glorot_uniform(&mut rng, dims.embedding_dim, pooled, pooled, dims.embedding_dim),
        true,
    );
    store.insert("enc.pool.b", Array2::zeros((1, dims.embedding_dim)), true);

    let (e, h) = (dims.embedding_dim, dims.predictor_hidden);
    store.insert("pred.w1", glorot_uniform(&mut rng, h, e, e, h), true);
    store.insert("pred.b1", Array2::zeros((1, h)), true);
    store.insert("pred.alpha", Array2::from_elem((1, 1), 0.25), true);
    store.insert("pred.w2", glorot_uniform(&mut rng, e, h, h, e), true);
    store.insert("pred.b2", Array2::zeros((1, e)), true);

    store.insert("proj.w", glorot_uniform(&mut rng, e, e, e, e), true);
    store.insert("proj.b", Array2::zeros((1, e)), true);
    store
}

/// Several graphs packed block-diagonally into one node/edge set.
pub struct GraphBatch {
    pub n_graphs: usize,
    pub obs_x: Array2<f64>,
    pub road_x: Array2<f64>,
    /// Graph id per obstacle node (for pooling).
    pub obs_seg: Rc<Vec<u32>>,
    pub o2o: BatchEdges,
    pub temp: BatchEdges,
    /// Reversed obstacle-to-road edges: src indexes road nodes, dst
    /// indexes obstacle nodes.
    pub r2o: BatchEdges,
    pub r2r: BatchEdges,
}

pub struct BatchEdges {
    pub src: Rc<Vec<u32>>,
    pub dst: Rc<Vec<u32>>,
    pub feats: Array2<f64>,
}

impl GraphBatch {
    pub fn new(graphs: &[&HeteroGraph]) -> Result<GraphBatch> {
        if graphs.is_empty() {
            return Err(Error::Shape("empty graph batch".into()));
        }
        let obs_dim = graphs[0].obstacle_features.ncols();
        let road_dim = graphs[0].road_features.ncols();
        let mut obs_rows = Vec::new();
        let mut road_rows = Vec::new();
        let mut obs_seg = Vec::new();
        let mut o2o = (Vec::new(), Vec::new(), Vec::new());
        let mut temp = (Vec::new(), Vec::new(), Vec::new());
        let mut r2o = (Vec::new(), Vec::new(), Vec::new());
        let mut r2r = (Vec::new(), Vec::new(), Vec::new());
        let mut obs_off = 0u32;
        let mut road_off = 0u32;

        for (gi, g) in graphs.iter().enumerate() {
            if g.n_obstacle_nodes() == 0 {
                return Err(Error::Graph(format!(
                    "{}: graph without obstacle nodes cannot be encoded",
                    g.scenario_id
                )));
            }
            if g.obstacle_features.ncols() != obs_dim || g.road_features.ncols() != road_dim {
                return Err(Error::Shape("mixed feature widths in batch".into()));
            }
            obs_rows.extend(g.obstacle_features.iter().copied());
            road_rows.extend(g.road_features.iter().copied());
            obs_seg.extend(std::iter::repeat_n(gi as u32, g.n_obstacle_nodes()));

            for (i, (s, d)) in g.o2o.src.iter().zip(&g.o2o.dst).enumerate() {
                o2o.0.push(s + obs_off);
                o2o.1.push(d + obs_off);
                o2o.2.extend(g.o2o.features.row(i).iter().copied());
            }
            for (i, (s, d)) in g.temporal.src.iter().zip(&g.temporal.dst).enumerate() {
                temp.0.push(s + obs_off);
                temp.1.push(d + obs_off);
                temp.2.extend(g.temporal.features.row(i).iter().copied());
            }
            // Obstacle-to-road edges are consumed in reverse.
            for (i, (s, d)) in g.o2r.src.iter().zip(&g.o2r.dst).enumerate() {
                r2o.0.push(d + road_off);
                r2o.1.push(s + obs_off);
                r2o.2.extend(g.o2r.features.row(i).iter().copied());
            }
            for (i, (s, d)) in g.r2r.src.iter().zip(&g.r2r.dst).enumerate() {
                r2r.0.push(s + road_off);
                r2r.1.push(d + road_off);
                r2r.2.extend(g.r2r.features.row(i).iter().copied());
            }
            obs_off += g.n_obstacle_nodes() as u32;
            road_off += g.n_road_nodes() as u32;
        }

        let pack = |(src, dst, feats): (Vec<u32>, Vec<u32>, Vec<f64>), dim: usize| BatchEdges {
            feats: Array2::from_shape_vec((src.len(), dim), feats).expect("rows match"),
            src: Rc::new(src),
            dst: Rc::new(dst),
        };
        Ok(GraphBatch {
            n_graphs: graphs.len(),
            obs_x: Array2::from_shape_vec((obs_off as usize, obs_dim), obs_rows)
                .expect("rows match"),
            road_x: Array2::from_shape_vec((road_off as usize, road_dim), road_rows)
                .expect("rows match"),
            obs_seg: Rc::new(obs_seg),
            o2o: pack(o2o, O2O_EDGE_DIM),
            temp: pack(temp, TEMPORAL_EDGE_DIM),
            r2o: pack(r2o, O2R_EDGE_DIM),
            r2r: pack(r2r, R2R_EDGE_DIM),
        })
    }
}

/// Parameters bound onto a tape as leaves; gradient extraction maps names
/// back through these vars.
pub struct BoundParams {
    vars: HashMap<String, Var>,
}

impl BoundParams {
    pub fn bind(tape: &mut Tape, store: &ParamStore) -> BoundParams {
        let mut vars = HashMap::new();
        for e in store.entries() {
            if e.trainable {
                vars.insert(e.name.clone(), tape.leaf(e.value.clone()));
            }
        }
        BoundParams { vars }
    }

    pub fn var(&self, name: &str) -> Var {
        self.vars[name]
    }

    /// Collects gradients by parameter name after a backward pass.
    pub fn grads(&self, grads: &crate::nn::Gradients) -> HashMap<String, Array2<f64>> {
        let mut out = HashMap::new();
        for (name, var) in &self.vars {
            if let Some(g) = grads.get(*var) {
                out.insert(name.clone(), g.clone());
            }
        }
        out
    }
}

/// One edge-feature SAGE convolution:
/// `x_i' = W1 x_i + W2 * mean_{j in N(i)} (x_j + We e_ij) + b`,
/// where targets with empty neighborhoods keep only the `W1 x_i + b` term.
#[allow(clippy::too_many_arguments)]
pub fn edge_sage_forward(
    tape: &mut Tape,
    w1: Var,
    w2: Var,
    we: Var,
    bias: Var,
    x_tgt: Var,
    x_src: Var,
    edge_src: Rc<Vec<u32>>,
    edge_dst: Rc<Vec<u32>>,
    edge_feats: Var,
    n_tgt: usize,
) -> Var {
    let self_term = tape.matmul_nt(x_tgt, w1);
    let xj = tape.gather_rows(x_src, edge_src);
    let ew = tape.matmul_nt(edge_feats, we);
    let summed = tape.add(xj, ew);
    let agg = tape.scatter_mean(summed, edge_dst, n_tgt);
    let neigh = tape.matmul_nt(agg, w2);
    let out = tape.add(self_term, neigh);
    tape.add_bias(out, bias)
}

#[allow(clippy::too_many_arguments)]
fn batchnorm(
    tape: &mut Tape,
    store: &ParamStore,
    bound: &BoundParams,
    prefix: &str,
    x: Var,
    mode: BnMode,
    eps: f64,
    updates: &mut Vec<BnUpdate>,
) -> Var {
    let gamma = bound.var(&format!("{prefix}.gamma"));
    let beta = bound.var(&format!("{prefix}.beta"));
    match mode {
        BnMode::Train => {
            let rows = tape.value(x).nrows();
            let (y, (mean, var)) = tape.batchnorm_train(x, gamma, beta, eps);
            if rows > 0 {
                updates.push(BnUpdate {
                    prefix: prefix.to_string(),
                    mean,
                    var,
                    rows,
                });
            }
            y
        }
        BnMode::Eval => {
            if tape.value(x).nrows() == 0 {
                let d = tape.value(x).ncols();
                return tape.leaf(Array2::zeros((0, d)));
            }
            let mean = store.get(&format!("{prefix}.running_mean")).clone();
            let var = store.get(&format!("{prefix}.running_var")).clone();
            tape.batchnorm_eval(x, gamma, beta, &mean, &var, eps)
        }
    }
}

/// Full encoder forward over a batch. Returns the `(n_graphs, 128)`
/// embedding matrix variable plus the batch-norm statistics gathered in
/// train mode.
pub fn encoder_forward(
    tape: &mut Tape,
    store: &ParamStore,
    bound: &BoundParams,
    batch: &GraphBatch,
    dims: &EncoderDims,
    mode: BnMode,
) -> (Var, Vec<BnUpdate>) {
    let mut updates = Vec::new();
    let n_obs = batch.obs_x.nrows();
    let n_road = batch.road_x.nrows();
    let mut h_obs = tape.leaf(batch.obs_x.clone());
    let mut h_road = tape.leaf(batch.road_x.clone());

    for l in 1..=3 {
        let rel = |name: &str, field: &str| format!("enc.l{l}.{name}.{field}");
        let mut conv = |tape: &mut Tape, name: &str, x_tgt: Var, x_src: Var, e: &BatchEdges, n: usize| {
            let feats = tape.leaf(e.feats.clone());
            edge_sage_forward(
                tape,
                bound.var(&rel(name, "w1")),
                bound.var(&rel(name, "w2")),
                bound.var(&rel(name, "we")),
                bound.var(&rel(name, "b")),
                x_tgt,
                x_src,
                Rc::clone(&e.src),
                Rc::clone(&e.dst),
                feats,
                n,
            )
        };
        let from_o2o = conv(tape, "o2o", h_obs, h_obs, &batch.o2o, n_obs);
        let from_temp = conv(tape, "temp", h_obs, h_obs, &batch.temp, n_obs);
        let from_road = conv(tape, "r2o", h_obs, h_road, &batch.r2o, n_obs);
        let road_next = conv(tape, "r2r", h_road, h_road, &batch.r2r, n_road);
        let obs_next = tape.mean_of(&[from_o2o, from_temp, from_road]);

        let obs_bn = batchnorm(
            tape, store, bound, &format!("enc.bn{l}.obs"), obs_next, mode, dims.bn_eps,
            &mut updates,
        );
        let road_bn = batchnorm(
            tape, store, bound, &format!("enc.bn{l}.road"), road_next, mode, dims.bn_eps,
            &mut updates,
        );
        if l < 3 {
            h_obs = tape.relu(obs_bn);
            h_road = tape.relu(road_bn);
        } else {
            h_obs = obs_bn;
            h_road = road_bn;
        }
    }

    let mn = tape.segment_min(h_obs, Rc::clone(&batch.obs_seg), batch.n_graphs);
    let mx = tape.segment_max(h_obs, Rc::clone(&batch.obs_seg), batch.n_graphs);
    let me = tape.segment_mean(h_obs, Rc::clone(&batch.obs_seg), batch.n_graphs);
    let pooled = tape.concat_cols(&[mn, mx, me]);
    let fused = tape.matmul_nt(pooled, bound.var("enc.pool.w"));
    let out = tape.add_bias(fused, bound.var("enc.pool.b"));
    (out, updates)
}

/// Predictor head: 128 -> 512 -> PReLU -> 128.
pub fn predictor_forward(tape: &mut Tape, bound: &BoundParams, z: Var) -> Var {
    let h = tape.matmul_nt(z, bound.var("pred.w1"));
    let h = tape.add_bias(h, bound.var("pred.b1"));
    let h = tape.prelu(h, bound.var("pred.alpha"));
    let h = tape.matmul_nt(h, bound.var("pred.w2"));
    tape.add_bias(h, bound.var("pred.b2"))
}

/// Contrastive projector: a single affine 128 -> 128 map.
pub fn projector_forward(tape: &mut Tape, bound: &BoundParams, z: Var) -> Var {
    let h = tape.matmul_nt(z, bound.var("proj.w"));
    tape.add_bias(h, bound.var("proj.b"))
}

/// Folds train-mode batch statistics into the running buffers
/// (`running <- (1 - momentum) * running + momentum * batch`), using the
/// unbiased variance for batches with more than one row.
pub fn apply_bn_updates(store: &mut ParamStore, updates: &[BnUpdate], momentum: f64) {
    for u in updates {
        let var = if u.rows > 1 {
            &u.var * (u.rows as f64 / (u.rows as f64 - 1.0))
        } else {
            u.var.clone()
        };
        let rm = store.get_mut(&format!("{}.running_mean", u.prefix));
        *rm = &*rm * (1.0 - momentum) + &u.mean * momentum;
        let rv = store.get_mut(&format!("{}.running_var", u.prefix));
        *rv = &*rv * (1.0 - momentum) + &var * momentum;
    }
}

/// Evaluation-mode embedding of a single graph.
pub fn encode(store: &ParamStore, dims: &EncoderDims, graph: &HeteroGraph) -> Result<Array1<f64>> {
    let batch = GraphBatch::new(&[graph])?;
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, store);
    let (out, _) = encoder_forward(&mut tape, store, &bound, &batch, dims, BnMode::Eval);
    let value = tape.value(out);
    if value.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eval(format!(
            "non-finite embedding for {}",
            graph.scenario_id
        )));
    }
    Ok(value.row(0).to_owned())
}

/// Evaluation-mode embeddings for many graphs, chunked for throughput.
/// Results match per-graph [`encode`] because evaluation batch norm is
/// row-local and pooling is per graph.
pub fn encode_all(
    store: &ParamStore,
    dims: &EncoderDims,
    graphs: &[HeteroGraph],
) -> Result<Array2<f64>> {
    const CHUNK: usize = 64;
    let mut out = Array2::zeros((graphs.len(), dims.embedding_dim));
    for (chunk_idx, chunk) in graphs.chunks(CHUNK).enumerate() {
        let refs: Vec<&HeteroGraph> = chunk.iter().collect();
        let batch = GraphBatch::new(&refs)?;
        let mut tape = Tape::new();
        let bound = BoundParams::bind(&mut tape, store);
        let (var, _) = encoder_forward(&mut tape, store, &bound, &batch, dims, BnMode::Eval);
        let values = tape.value(var);
        for (i, row) in values.rows().into_iter().enumerate() {
            out.row_mut(chunk_idx * CHUNK + i).assign(&row);
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eval("non-finite embedding in batch".into()));
    }
    Ok(out)
}

/// Predictor applied outside a training tape.
pub fn predict(store: &ParamStore, z: &Array2<f64>) -> Array2<f64> {
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, store);
    let zv = tape.leaf(z.clone());
    let out = predictor_forward(&mut tape, &bound, zv);
    tape.value(out).clone()
}
