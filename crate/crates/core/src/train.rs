//! Self-supervised training.
//!
//! Two objectives over the same encoder and augmentations:
//!
//! * bootstrapped (`bgrl`): an online encoder plus predictor chases a
//!   frozen target encoder of identical structure; the target follows the
//!   online weights through interval EMA updates with a reverse-decaying
//!   momentum schedule. No negative samples.
//! * contrastive (`graphcl`): one encoder plus a linear projector trained
//!   with normalized-temperature cross entropy against in-batch negatives.

use std::rc::Rc;
use std::str::FromStr;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{sample_view, AugmentConfig};
use crate::encoder::{
    apply_bn_updates, encoder_forward, predictor_forward, projector_forward, BnMode, BoundParams,
    EncoderDims, GraphBatch,
};
use crate::error::{Error, Result};
use crate::graph::{BuilderConfig, HeteroGraph};
use crate::nn::{clip_global_norm, AdamW, ParamStore, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Bgrl,
    Graphcl,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Bgrl => "bgrl",
            ModelKind::Graphcl => "graphcl",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bgrl" => Ok(ModelKind::Bgrl),
            "graphcl" => Ok(ModelKind::Graphcl),
            other => Err(Error::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Base EMA momentum; the schedule decays it reversely toward 1.
    pub base_momentum: f64,
    /// Contrastive temperature.
    pub temperature: f64,
    /// Target network update interval in steps (`k`).
    pub target_update_interval: usize,
    pub grad_clip: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            weight_decay: 1e-3,
            base_momentum: 0.99,
            temperature: 0.5,
            target_update_interval: 10,
            grad_clip: 5.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size < 2 {
            return Err(Error::Config("epochs >= 1 and batch_size >= 2 required".into()));
        }
        if self.learning_rate <= 0.0 || self.weight_decay < 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0 < self.base_momentum && self.base_momentum < 1.0) {
            return Err(Error::Config("base momentum must lie in (0, 1)".into()));
        }
        if self.temperature <= 0.0 || self.target_update_interval == 0 {
            return Err(Error::Config("temperature and k must be positive".into()));
        }
        Ok(())
    }
}

/// Bootstrap loss: `-1/2 * mean_i [cos(z1_pred_i, z2_tgt_i) +
/// cos(z2_pred_i, z1_tgt_i)]` with all vectors L2-normalized first.
/// Rejects zero-norm rows, which signal representation collapse.
pub fn bgrl_loss_tape(
    tape: &mut Tape,
    z1_pred: Var,
    z2_pred: Var,
    z1_tgt: Var,
    z2_tgt: Var,
) -> Result<Var> {
    for v in [z1_pred, z2_pred, z1_tgt, z2_tgt] {
        check_rows_nonzero(tape.value(v))?;
    }
    let p1 = tape.l2_normalize_rows(z1_pred);
    let p2 = tape.l2_normalize_rows(z2_pred);
    let t1 = tape.l2_normalize_rows(z1_tgt);
    let t2 = tape.l2_normalize_rows(z2_tgt);
    let c1 = tape.rowwise_dot(p1, t2);
    let c2 = tape.rowwise_dot(p2, t1);
    let s = tape.add(c1, c2);
    let m = tape.mean_all(s);
    Ok(tape.scale(m, -0.5))
}

fn check_rows_nonzero(z: &Array2<f64>) -> Result<()> {
    for (i, row) in z.rows().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Error::DegenerateEmbedding(format!(
                "embedding row {i} has norm {norm}"
            )));
        }
    }
    Ok(())
}

/// Value-only bootstrap loss, for evaluation and oracles.
pub fn bgrl_loss(
    z1_pred: &Array2<f64>,
    z2_pred: &Array2<f64>,
    z1_tgt: &Array2<f64>,
    z2_tgt: &Array2<f64>,
) -> Result<f64> {
    let mut tape = Tape::new();
    let a = tape.leaf(z1_pred.clone());
    let b = tape.leaf(z2_pred.clone());
    let c = tape.leaf(z1_tgt.clone());
    let d = tape.leaf(z2_tgt.clone());
    let loss = bgrl_loss_tape(&mut tape, a, b, c, d)?;
    Ok(tape.value(loss)[(0, 0)])
}

/// Normalized-temperature cross entropy over in-batch negatives: for each
/// anchor `z1_i` the positive is `z2_i` and the negatives are all `z2_j`,
/// `j != i` (and symmetrically); the loss is the mean over all `2N` terms.
pub fn graphcl_loss_tape(tape: &mut Tape, z1: Var, z2: Var, temperature: f64) -> Result<Var> {
    let n = tape.value(z1).nrows();
    if n < 2 {
        return Err(Error::Train {
            step: 0,
            message: "contrastive loss needs a batch of at least 2".into(),
        });
    }
    check_rows_nonzero(tape.value(z1))?;
    check_rows_nonzero(tape.value(z2))?;
    let a = tape.l2_normalize_rows(z1);
    let b = tape.l2_normalize_rows(z2);
    let targets = Rc::new((0..n).collect::<Vec<usize>>());
    let sim_ab = tape.matmul_nt(a, b);
    let logits_ab = tape.scale(sim_ab, 1.0 / temperature);
    let ce_ab = tape.cross_entropy_rows(logits_ab, Rc::clone(&targets));
    let sim_ba = tape.matmul_nt(b, a);
    let logits_ba = tape.scale(sim_ba, 1.0 / temperature);
    let ce_ba = tape.cross_entropy_rows(logits_ba, targets);
    let s = tape.add(ce_ab, ce_ba);
    Ok(tape.scale(s, 0.5))
}

/// Value-only contrastive loss.
pub fn graphcl_loss(z1: &Array2<f64>, z2: &Array2<f64>, temperature: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let a = tape.leaf(z1.clone());
    let b = tape.leaf(z2.clone());
    let loss = graphcl_loss_tape(&mut tape, a, b, temperature)?;
    Ok(tape.value(loss)[(0, 0)])
}

/// `p_t <- m * p_t + (1 - m) * p_o` over all trainable parameters.
pub fn ema_update(target: &mut ParamStore, online: &ParamStore, momentum: f64) -> Result<()> {
    for entry in online.entries() {
        if !entry.trainable {
            continue;
        }
        let t = target.get_mut(&entry.name);
        if t.raw_dim() != entry.value.raw_dim() {
            return Err(Error::Shape(format!(
                "ema shape mismatch for `{}`",
                entry.name
            )));
        }
        *t = &*t * momentum + &entry.value * (1.0 - momentum);
    }
    Ok(())
}

/// Reverse-decaying momentum: `1 - (1 - m_base) * (cos(pi t / T) + 1) / 2`,
/// increasing from `m_base` at `t = 0` to 1 at `t = T` (clamped beyond).
pub fn momentum_schedule(step: usize, total_steps: usize, base_momentum: f64) -> f64 {
    if total_steps == 0 || step >= total_steps {
        return 1.0;
    }
    let t = step as f64 / total_steps as f64;
    1.0 - (1.0 - base_momentum) * ((std::f64::consts::PI * t).cos() + 1.0) / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub momentum: f64,
}

pub struct TrainOutcome {
    /// Online encoder plus predictor/projector parameters.
    pub params: ParamStore,
    pub loss_curve: Vec<LossPoint>,
    pub epoch_mean_loss: Vec<f64>,
}

/// Writes a loss curve as `step,epoch,loss,momentum` CSV.
pub fn write_loss_curve(path: &std::path::Path, curve: &[LossPoint]) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "step,epoch,loss,momentum")?;
    for p in curve {
        writeln!(w, "{},{},{},{}", p.step, p.epoch, p.loss, p.momentum)?;
    }
    Ok(())
}

fn stream_seed(seed: u64, tag: u64, index: u64) -> u64 {
    fn splitmix64(mut x: u64) -> u64 {
        x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x ^ (x >> 31)
    }
    splitmix64(seed ^ tag.rotate_left(17)).wrapping_add(splitmix64(index))
}

const TAG_SHUFFLE: u64 = 0x01;
const TAG_AUGMENT: u64 = 0x02;
const TAG_INIT: u64 = 0x03;

/// Batch index ranges per epoch; a trailing singleton is merged into the
/// previous batch because the contrastive loss needs at least two samples.
fn batch_ranges(n: usize, batch_size: usize) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + batch_size).min(n);
        out.push(start..end);
        start = end;
    }
    if out.len() >= 2 && out.last().unwrap().len() == 1 {
        let last = out.pop().unwrap();
        let prev = out.pop().unwrap();
        out.push(prev.start..last.end);
    }
    out
}

/// Trains one model kind over prebuilt graphs. Deterministic in the seed:
/// identical inputs reproduce identical loss curves and parameters.
pub fn train(
    graphs: &[HeteroGraph],
    model: ModelKind,
    builder: &BuilderConfig,
    dims: &EncoderDims,
    augment: &AugmentConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if graphs.len() < config.batch_size {
        return Err(Error::Config(format!(
            "need at least batch_size = {} graphs, got {}",
            config.batch_size,
            graphs.len()
        )));
    }

    let mut online = crate::encoder::init_params(
        builder,
        dims,
        stream_seed(config.seed, TAG_INIT, model as u64),
    );
    let mut target = match model {
        ModelKind::Bgrl => Some(online.clone()),
        ModelKind::Graphcl => None,
    };
    let mut optimizer = AdamW::new(config.learning_rate, config.weight_decay);

    let ranges = batch_ranges(graphs.len(), config.batch_size);
    let steps_per_epoch = ranges.len();
    let total_steps = config.epochs * steps_per_epoch;

    let mut curve = Vec::with_capacity(total_steps);
    let mut epoch_mean_loss = Vec::with_capacity(config.epochs);
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..graphs.len()).collect();
        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(stream_seed(config.seed, TAG_SHUFFLE, epoch as u64));
        use rand::seq::SliceRandom;
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0;
        for range in &ranges {
            step += 1;
            let mut aug_rng =
                ChaCha8Rng::seed_from_u64(stream_seed(config.seed, TAG_AUGMENT, step as u64));
            let batch_graphs: Vec<&HeteroGraph> =
                order[range.clone()].iter().map(|i| &graphs[*i]).collect();
            let view1: Vec<HeteroGraph> = batch_graphs
                .iter()
                .map(|g| sample_view(g, augment, &mut aug_rng))
                .collect();
            let view2: Vec<HeteroGraph> = batch_graphs
                .iter()
                .map(|g| sample_view(g, augment, &mut aug_rng))
                .collect();
            let batch1 = GraphBatch::new(&view1.iter().collect::<Vec<_>>())?;
            let batch2 = GraphBatch::new(&view2.iter().collect::<Vec<_>>())?;

            let momentum = momentum_schedule(step, total_steps, config.base_momentum);
            let loss = match model {
                ModelKind::Bgrl => {
                    let target_ref = target.as_mut().expect("bgrl keeps a target");
                    bgrl_step(
                        &mut online,
                        target_ref,
                        &batch1,
                        &batch2,
                        dims,
                        config,
                        &mut optimizer,
                        step,
                        momentum,
                    )?
                }
                ModelKind::Graphcl => graphcl_step(
                    &mut online,
                    &batch1,
                    &batch2,
                    dims,
                    config,
                    &mut optimizer,
                    step,
                )?,
            };
            if !loss.is_finite() {
                return Err(Error::Train {
                    step,
                    message: format!(
                        "non-finite loss over scenarios {:?}",
                        batch_graphs
                            .iter()
                            .map(|g| g.scenario_id.as_str())
                            .collect::<Vec<_>>()
                    ),
                });
            }
            epoch_loss += loss;
            curve.push(LossPoint {
                step,
                epoch,
                loss,
                momentum,
            });
        }
        epoch_mean_loss.push(epoch_loss / steps_per_epoch as f64);
    }

    Ok(TrainOutcome {
        params: online,
        loss_curve: curve,
        epoch_mean_loss,
    })
}

#[allow(clippy::too_many_arguments)]
fn bgrl_step(
    online: &mut ParamStore,
    target: &mut ParamStore,
    batch1: &GraphBatch,
    batch2: &GraphBatch,
    dims: &EncoderDims,
    config: &TrainConfig,
    optimizer: &mut AdamW,
    step: usize,
    momentum: f64,
) -> Result<f64> {
    // Target forward passes carry no gradients: run them on separate tapes
    // and re-enter the values as constants.
    let t1 = {
        let mut tape = Tape::new();
        let bound = BoundParams::bind(&mut tape, target);
        let (z, _) = encoder_forward(&mut tape, target, &bound, batch1, dims, BnMode::Train);
        tape.value(z).clone()
    };
    let t2 = {
        let mut tape = Tape::new();
        let bound = BoundParams::bind(&mut tape, target);
        let (z, _) = encoder_forward(&mut tape, target, &bound, batch2, dims, BnMode::Train);
        tape.value(z).clone()
    };

    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, online);
    let (z1, mut updates) = encoder_forward(&mut tape, online, &bound, batch1, dims, BnMode::Train);
    let (z2, updates2) = encoder_forward(&mut tape, online, &bound, batch2, dims, BnMode::Train);
    updates.extend(updates2);
    let p1 = predictor_forward(&mut tape, &bound, z1);
    let p2 = predictor_forward(&mut tape, &bound, z2);
    let t1v = tape.leaf(t1);
    let t2v = tape.leaf(t2);
    let loss = bgrl_loss_tape(&mut tape, p1, p2, t1v, t2v)?;
    let loss_value = tape.value(loss)[(0, 0)];

    let grads = tape.backward(loss);
    let mut grad_map = bound.grads(&grads);
    clip_global_norm(&mut grad_map, config.grad_clip);
    optimizer.step(online, &grad_map);
    apply_bn_updates(online, &updates, dims.bn_momentum);

    if step % config.target_update_interval == 0 {
        ema_update(target, online, momentum)?;
    }
    Ok(loss_value)
}

fn graphcl_step(
    online: &mut ParamStore,
    batch1: &GraphBatch,
    batch2: &GraphBatch,
    dims: &EncoderDims,
    config: &TrainConfig,
    optimizer: &mut AdamW,
    step: usize,
) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, online);
    let (z1, mut updates) = encoder_forward(&mut tape, online, &bound, batch1, dims, BnMode::Train);
    let (z2, updates2) = encoder_forward(&mut tape, online, &bound, batch2, dims, BnMode::Train);
    updates.extend(updates2);
    let h1 = projector_forward(&mut tape, &bound, z1);
    let h2 = projector_forward(&mut tape, &bound, z2);
    let loss = graphcl_loss_tape(&mut tape, h1, h2, config.temperature).map_err(|e| match e {
        Error::Train { message, .. } => Error::Train { step, message },
        other => other,
    })?;
    let loss_value = tape.value(loss)[(0, 0)];

    let grads = tape.backward(loss);
    let mut grad_map = bound.grads(&grads);
    clip_global_norm(&mut grad_map, config.grad_clip);
    optimizer.step(online, &grad_map);
    apply_bn_updates(online, &updates, dims.bn_momentum);
    Ok(loss_value)
}
