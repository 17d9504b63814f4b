use serde::{Deserialize, Serialize};

use super::params::Parameters;
use super::tensor::Matrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// Applies one update. `grads` must have the same tree shape as `params`.
    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let mut g_list: Vec<&Matrix> = Vec::new();
        grads.visit("", &mut |_, g| g_list.push(g));

        if self.first.is_empty() {
            self.first = g_list.iter().map(|g| Matrix::zeros(g.rows(), g.cols())).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != g_list.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, got {}",
                self.first.len(),
                g_list.len()
            )));
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);

        let mut idx = 0;
        let mut err = None;
        let (first, second) = (&mut self.first, &mut self.second);
        params.visit_mut("", &mut |name, p| {
            let g = g_list[idx];
            if g.shape() != p.shape() || first[idx].shape() != p.shape() {
                err.get_or_insert_with(|| Error::Shape(format!("{name}: gradient shape mismatch")));
                idx += 1;
                return;
            }
            let m = first[idx].data_mut();
            let v = second[idx].data_mut();
            for (k, (pv, &gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * gv;
                v[k] = beta2 * v[k] + (1.0 - beta2) * gv * gv;
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                *pv -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            idx += 1;
        });
        err.map_or(Ok(()), Err)
    }
}

/// Piecewise-constant learning rate decayed by `gamma` at each milestone epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiStepLr {
    pub base_lr: f64,
    pub milestones: Vec<usize>,
    pub gamma: f64,
}

impl MultiStepLr {
    /// Halves the rate at 50% and 75% of `total_epochs`.
    pub fn halving(base_lr: f64, total_epochs: usize) -> Self {
        Self {
            base_lr,
            milestones: vec![total_epochs / 2, total_epochs * 3 / 4],
            gamma: 0.5,
        }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let passed = self.milestones.iter().filter(|&&m| epoch >= m).count();
        self.base_lr * self.gamma.powi(passed as i32)
    }
}
