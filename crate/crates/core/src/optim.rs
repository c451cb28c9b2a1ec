//! Adam with bias correction, plus global-norm gradient clipping.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Moments {
    first: Vec<f64>,
    second: Vec<f64>,
    steps: i32,
}

/// Per-tensor moment estimates keyed by tensor name. Tensors that are not
/// passed to a step keep their state untouched.
#[derive(Debug, Clone, Default)]
pub struct Adam {
    config: AdamConfig,
    state: BTreeMap<String, Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            state: BTreeMap::new(),
        }
    }

    /// Applies one update. `params` and `grads` must list the same tensors in
    /// the same order.
    pub fn step(&mut self, params: Vec<(String, &mut [f64])>, grads: Vec<(String, &[f64])>, lr: f64) {
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
        } = self.config;
        for ((name, p), (gname, g)) in params.into_iter().zip(grads) {
            debug_assert_eq!(name, gname);
            debug_assert_eq!(p.len(), g.len());
            let m = self.state.entry(name).or_insert_with(|| Moments {
                first: vec![0.0; p.len()],
                second: vec![0.0; p.len()],
                steps: 0,
            });
            m.steps += 1;
            let c1 = 1.0 - beta1.powi(m.steps);
            let c2 = 1.0 - beta2.powi(m.steps);
            for i in 0..p.len() {
                m.first[i] = beta1 * m.first[i] + (1.0 - beta1) * g[i];
                m.second[i] = beta2 * m.second[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m.first[i] / c1;
                let v_hat = m.second[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
    }
}

/// Rescales gradients so their joint L2 norm is at most `max_norm`. Returns
/// the norm before clipping.
pub fn clip_global_norm(grads: Vec<(String, &mut [f64])>, max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|(_, g)| g.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let factor = max_norm / norm;
        for (_, g) in grads {
            g.iter_mut().for_each(|v| *v *= factor);
        }
    }
    norm
}
