//! AdamW with decoupled weight decay, plus global-norm gradient clipping.

use std::collections::HashMap;

use ndarray::Array2;

use crate::nn::params::ParamStore;

pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: usize,
    first: HashMap<String, Array2<f64>>,
    second: HashMap<String, Array2<f64>>,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> AdamW {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            first: HashMap::new(),
            second: HashMap::new(),
        }
    }

    /// Applies one update to every trainable parameter that has a gradient.
    /// Iterates in store order, so updates are deterministic.
    pub fn step(&mut self, store: &mut ParamStore, grads: &HashMap<String, Array2<f64>>) {
        self.step += 1;
        let t = self.step as f64;
        let bias1 = 1.0 - self.beta1.powf(t);
        let bias2 = 1.0 - self.beta2.powf(t);
        for entry in store.entries_mut() {
            if !entry.trainable {
                continue;
            }
            let Some(g) = grads.get(&entry.name) else {
                continue;
            };
            let m = self
                .first
                .entry(entry.name.clone())
                .or_insert_with(|| Array2::zeros(g.raw_dim()));
            let v = self
                .second
                .entry(entry.name.clone())
                .or_insert_with(|| Array2::zeros(g.raw_dim()));
            *m = &*m * self.beta1 + g * (1.0 - self.beta1);
            *v = &*v * self.beta2 + &g.mapv(|x| x * x) * (1.0 - self.beta2);
            let m_hat = &*m / bias1;
            let v_hat = &*v / bias2;
            let update = &m_hat / &v_hat.mapv(|x| x.sqrt() + self.eps);
            // Decoupled weight decay.
            entry.value = &entry.value * (1.0 - self.lr * self.weight_decay) - &(update * self.lr);
        }
    }
}

/// Scales all gradients in place so the global L2 norm does not exceed
/// `max_norm`. Returns the pre-clip norm. Summation runs in sorted name
/// order to keep the result reproducible.
pub fn clip_global_norm(grads: &mut HashMap<String, Array2<f64>>, max_norm: f64) -> f64 {
    let mut names: Vec<&String> = grads.keys().collect();
    names.sort();
    let mut sq = 0.0;
    for name in &names {
        sq += grads[*name].iter().map(|v| v * v).sum::<f64>();
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.values_mut() {
            *g *= scale;
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn adamw_descends_a_quadratic() {
        // Minimize f(w) = 0.5 * w^2; gradient is w.
        let mut store = ParamStore::new();
        store.insert("w", arr2(&[[5.0]]), true);
        let mut opt = AdamW::new(0.1, 0.0);
        for _ in 0..300 {
            let g = store.get("w").clone();
            let mut grads = HashMap::new();
            grads.insert("w".to_string(), g);
            opt.step(&mut store, &grads);
        }
        assert!(store.get("w")[(0, 0)].abs() < 0.05);
    }

    #[test]
    fn weight_decay_shrinks_parameters_without_gradient_signal() {
        let mut store = ParamStore::new();
        store.insert("w", arr2(&[[1.0]]), true);
        let mut opt = AdamW::new(0.1, 0.5);
        let mut grads = HashMap::new();
        grads.insert("w".to_string(), arr2(&[[0.0]]));
        opt.step(&mut store, &grads);
        assert!((store.get("w")[(0, 0)] - 0.95).abs() < 1e-12);
    }

    #[test]
    fn clipping_preserves_direction_and_caps_norm() {
        let mut grads = HashMap::new();
        grads.insert("a".to_string(), arr2(&[[3.0, 0.0]]));
        grads.insert("b".to_string(), arr2(&[[0.0, 4.0]]));
        let pre = clip_global_norm(&mut grads, 1.0);
        assert!((pre - 5.0).abs() < 1e-12);
        let mut sq = 0.0;
        for g in grads.values() {
            sq += g.iter().map(|v| v * v).sum::<f64>();
        }
        assert!((sq.sqrt() - 1.0).abs() < 1e-12);
        assert!((grads["a"][(0, 0)] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn small_gradients_are_not_rescaled() {
        let mut grads = HashMap::new();
        grads.insert("a".to_string(), arr2(&[[0.1]]));
        clip_global_norm(&mut grads, 5.0);
        assert_eq!(grads["a"][(0, 0)], 0.1);
    }
}
