//! Downstream multi-label classifier over frozen embeddings.
//!
//! Reuses the predictor architecture (128 -> 512 -> PReLU -> |vocab|) and
//! trains full-batch with per-label binary cross entropy on the logits.

use std::collections::BTreeSet;
use std::rc::Rc;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EmbeddingSet;
use crate::nn::{glorot_uniform, AdamW, ParamStore, Tape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden_dim: usize,
    /// Sigmoid decision threshold for label membership.
    pub threshold: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 200,
            learning_rate: 3e-3,
            hidden_dim: 512,
            threshold: 0.5,
            seed: 0,
        }
    }
}

pub struct Classifier {
    params: ParamStore,
    vocab: Vec<String>,
    threshold: f64,
    pub loss_curve: Vec<f64>,
}

impl Classifier {
    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    /// Raw logits, one row per embedding, columns in vocabulary order.
    pub fn logits(&self, vectors: &Array2<f64>) -> Array2<f64> {
        let mut tape = Tape::new();
        let x = tape.leaf(vectors.clone());
        let w1 = tape.leaf(self.params.get("cls.w1").clone());
        let b1 = tape.leaf(self.params.get("cls.b1").clone());
        let alpha = tape.leaf(self.params.get("cls.alpha").clone());
        let w2 = tape.leaf(self.params.get("cls.w2").clone());
        let b2 = tape.leaf(self.params.get("cls.b2").clone());
        let h = tape.matmul_nt(x, w1);
        let h = tape.add_bias(h, b1);
        let h = tape.prelu(h, alpha);
        let h = tape.matmul_nt(h, w2);
        let out = tape.add_bias(h, b2);
        tape.value(out).clone()
    }

    /// Predicted label sets: labels whose sigmoid score exceeds the
    /// threshold.
    pub fn predict_sets(&self, vectors: &Array2<f64>) -> Vec<BTreeSet<String>> {
        let logits = self.logits(vectors);
        // sigmoid(z) > threshold  <=>  z > logit(threshold)
        let cut = (self.threshold / (1.0 - self.threshold)).ln();
        logits
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, z)| **z > cut)
                    .map(|(i, _)| self.vocab[i].clone())
                    .collect()
            })
            .collect()
    }
}

/// Trains the classifier on a labeled embedding set. Deterministic given
/// the config seed.
pub fn train_classifier(
    train: &EmbeddingSet,
    vocab: &[String],
    config: &ClassifierConfig,
) -> Result<Classifier> {
    if vocab.is_empty() {
        return Err(Error::Eval("empty label vocabulary".into()));
    }
    let label_sets = train
        .label_sets
        .as_ref()
        .ok_or_else(|| Error::Eval("classifier needs labeled embeddings".into()))?;

    let n = train.len();
    let dim = train.vectors.ncols();
    let v = vocab.len();
    let mut targets = Array2::zeros((n, v));
    for (i, set) in label_sets.iter().enumerate() {
        for (j, label) in vocab.iter().enumerate() {
            if set.contains(label) {
                targets[(i, j)] = 1.0;
            }
        }
    }
    let targets = Rc::new(targets);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let h = config.hidden_dim;
    let mut params = ParamStore::new();
    params.insert("cls.w1", glorot_uniform(&mut rng, h, dim, dim, h), true);
    params.insert("cls.b1", Array2::zeros((1, h)), true);
    params.insert("cls.alpha", Array2::from_elem((1, 1), 0.25), true);
    params.insert("cls.w2", glorot_uniform(&mut rng, v, h, h, v), true);
    params.insert("cls.b2", Array2::zeros((1, v)), true);

    let mut optimizer = AdamW::new(config.learning_rate, 0.0);
    let mut loss_curve = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let mut tape = Tape::new();
        let x = tape.leaf(train.vectors.clone());
        let w1 = tape.leaf(params.get("cls.w1").clone());
        let b1 = tape.leaf(params.get("cls.b1").clone());
        let alpha = tape.leaf(params.get("cls.alpha").clone());
        let w2 = tape.leaf(params.get("cls.w2").clone());
        let b2 = tape.leaf(params.get("cls.b2").clone());
        let hidden = tape.matmul_nt(x, w1);
        let hidden = tape.add_bias(hidden, b1);
        let hidden = tape.prelu(hidden, alpha);
        let out = tape.matmul_nt(hidden, w2);
        let logits = tape.add_bias(out, b2);
        let loss = tape.bce_with_logits_mean(logits, Rc::clone(&targets));
        let loss_value = tape.value(loss)[(0, 0)];
        if !loss_value.is_finite() {
            return Err(Error::Eval("non-finite classifier loss".into()));
        }
        loss_curve.push(loss_value);

        let grads = tape.backward(loss);
        let mut grad_map = std::collections::HashMap::new();
        for (name, var) in [
            ("cls.w1", w1),
            ("cls.b1", b1),
            ("cls.alpha", alpha),
            ("cls.w2", w2),
            ("cls.b2", b2),
        ] {
            if let Some(g) = grads.get(var) {
                grad_map.insert(name.to_string(), g.clone());
            }
        }
        optimizer.step(&mut params, &grad_map);
    }

    Ok(Classifier {
        params,
        vocab: vocab.to_vec(),
        threshold: config.threshold,
        loss_curve,
    })
}

/// The most frequent full label set in the training data (ties broken
/// lexicographically): the baseline prediction every sample receives.
pub fn majority_label_set(label_sets: &[BTreeSet<String>]) -> BTreeSet<String> {
    use std::collections::BTreeMap;
    let mut counts: BTreeMap<&BTreeSet<String>, usize> = BTreeMap::new();
    for s in label_sets {
        *counts.entry(s).or_default() += 1;
    }
    counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
        .map(|(s, _)| (*s).clone())
        .unwrap_or_default()
}
