use serde::{Deserialize, Serialize};

use super::params::{GradSlot, Gradients, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Coefficient of `l2 * ||theta||^2` over the parameters active in a step.
    pub l2: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            l2: 0.0,
        }
    }
}

/// Adam with bias correction.
///
/// Row-sparse parameters are updated lazily: only rows present in the
/// gradient have their moments and values touched. The regularization
/// gradient `2 * l2 * theta` is added to exactly those rows and to every
/// dense parameter.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let first = params.iter().map(|(_, p)| vec![0.0; p.data.len()]).collect();
        let second = params.iter().map(|(_, p)| vec![0.0; p.data.len()]).collect();
        Adam {
            config,
            step: 0,
            first,
            second,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) -> Result<()> {
        if !grads.all_finite() {
            return Err(Error::NonFinite(format!(
                "gradient at optimizer step {}",
                self.step + 1
            )));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            l2,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);

        let ids: Vec<_> = params.iter().map(|(id, _)| id).collect();
        for id in ids {
            let m = &mut self.first[id.0];
            let v = &mut self.second[id.0];
            let p = params.get_mut(id);
            let mut update = |k: usize, g: f64, data: &mut [f64]| {
                let g = g + 2.0 * l2 * data[k];
                m[k] = beta1 * m[k] + (1.0 - beta1) * g;
                v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
                let mhat = m[k] / c1;
                let vhat = v[k] / c2;
                data[k] -= lr * mhat / (vhat.sqrt() + eps);
            };
            match grads.slot(id) {
                GradSlot::Dense(g) => {
                    for k in 0..p.data.len() {
                        let gk = g.get(k).copied().unwrap_or(0.0);
                        update(k, gk, &mut p.data);
                    }
                }
                GradSlot::Rows(rows) => {
                    let row_len = p.row_len();
                    for (row, g) in rows {
                        for (c, gk) in g.iter().enumerate() {
                            update(row * row_len + c, *gk, &mut p.data);
                        }
                    }
                }
            }
        }
        if !params.all_finite() {
            return Err(Error::NonFinite(format!("parameters after step {}", self.step)));
        }
        Ok(())
    }
}
