//! Adam optimizer and cosine-annealing schedules for the learning rate and
//! the SSDP rate scalars.

use crate::error::{Error, Result};

/// Adam hyperparameters. Defaults: `beta1 = 0.9`, `beta2 = 0.999`,
/// `eps = 1e-8`, `lr = 5e-4`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) {
            return Err(Error::Config(format!("lr must be >= 0, got {}", self.lr)));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {v}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }
}

/// Adam state: one pair of moment accumulators per parameter tensor plus a
/// shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub hp: AdamParams,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    /// One slot per parameter tensor, sized by element counts.
    pub fn new(hp: AdamParams, tensor_sizes: &[usize]) -> Self {
        Self {
            hp,
            first: tensor_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: tensor_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Bias-corrected moment update; `params <- params - lr * m_hat / (sqrt(v_hat) + eps)`.
    ///
    /// `params[k]` and `grads[k]` must line up with slot `k`. The step
    /// counter advances even for all-zero gradients.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        self.hp.validate()?;
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::Dimension(format!(
                "adam has {} slots, got {} params / {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (k, (p, g)) in params.iter().zip(grads.iter()).enumerate() {
            if p.len() != self.first[k].len() || g.len() != self.first[k].len() {
                return Err(Error::Dimension(format!(
                    "adam slot {k} holds {} entries, got {} params / {} grads",
                    self.first[k].len(),
                    p.len(),
                    g.len()
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("adam slot {k} received non-finite gradient")));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let AdamParams { lr, beta1, beta2, eps } = self.hp;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (k, (p, g)) in params.iter_mut().zip(grads.iter()).enumerate() {
            let m = &mut self.first[k];
            let v = &mut self.second[k];
            for j in 0..m.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Cosine annealing from `v_max` at epoch 0 down to `v_min` at `total_epochs`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CosineSchedule {
    pub v_max: f64,
    pub v_min: f64,
    pub total_epochs: usize,
}

impl CosineSchedule {
    pub fn new(v_max: f64, v_min: f64, total_epochs: usize) -> Result<Self> {
        if !(v_min <= v_max) {
            return Err(Error::Config(format!(
                "cosine schedule needs v_min <= v_max, got {v_min} > {v_max}"
            )));
        }
        if total_epochs < 1 {
            return Err(Error::Config("cosine schedule needs total_epochs >= 1".into()));
        }
        Ok(Self { v_max, v_min, total_epochs })
    }

    /// `v_min + 0.5 (v_max - v_min) (1 + cos(pi * epoch / total))`.
    pub fn value(&self, epoch: usize) -> Result<f64> {
        if epoch > self.total_epochs {
            return Err(Error::Config(format!(
                "epoch {epoch} outside schedule range 0..={}",
                self.total_epochs
            )));
        }
        let phase = std::f64::consts::PI * epoch as f64 / self.total_epochs as f64;
        Ok(self.v_min + 0.5 * (self.v_max - self.v_min) * (1.0 + phase.cos()))
    }
}
