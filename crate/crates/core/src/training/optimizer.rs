use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Rate for the embeddings, encoder and head.
    pub lr: f64,
    /// Rate reserved for a feature backbone; there is none at desk scale.
    pub backbone_lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Epoch (0-based) from which the rate is multiplied by `decay_factor`.
    pub decay_epoch: Option<usize>,
    pub decay_factor: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr: 3e-3,
            backbone_lr: 1e-5,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay_epoch: Some(24),
            decay_factor: 0.1,
            epochs: 30,
            batch_size: 4,
            grad_clip: Some(1.0),
        }
    }
}

impl OptimizerConfig {
    /// The full-scale schedule: 8 epochs of batch 16 at 1e-4, decayed at
    /// the sixth epoch.
    pub fn paper() -> Self {
        OptimizerConfig {
            lr: 1e-4,
            decay_epoch: Some(5),
            epochs: 8,
            batch_size: 16,
            ..OptimizerConfig::default()
        }
    }

    /// Phase-2 settings: the same method at 1e-2 without weight decay.
    pub fn aggregation() -> Self {
        OptimizerConfig {
            lr: 1e-2,
            weight_decay: 0.0,
            decay_epoch: None,
            epochs: 30,
            batch_size: 4,
            ..OptimizerConfig::default()
        }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.decay_epoch {
            Some(d) if epoch >= d => self.lr * self.decay_factor,
            _ => self.lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !(self.backbone_lr >= 0.0) {
            return Err(Error::Config("learning rates must be non-negative".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::Config("invalid moment parameters".into()));
        }
        if !(self.weight_decay >= 0.0) || !(self.decay_factor > 0.0) {
            return Err(Error::Config("weight_decay and decay_factor must be non-negative".into()));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::Config(format!("grad_clip must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

/// Adam with decoupled weight decay.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamW {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = store.params().iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        AdamW {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies one update from the gradients held in `store`.
    pub fn update(&mut self, store: &mut ParamStore, cfg: &OptimizerConfig, lr: f64) -> Result<()> {
        if self.m.len() != store.len() {
            return Err(Error::Contract(format!(
                "optimizer tracks {} tensors but the store holds {}",
                self.m.len(),
                store.len()
            )));
        }
        let params = store.params_mut()?;
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let (w, g) = (p.value.data_mut(), p.grad.data());
            for i in 0..w.len() {
                let mi = &mut m.data_mut()[i];
                *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * g[i];
                let vi = &mut v.data_mut()[i];
                *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * g[i] * g[i];
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                w[i] -= lr * (mhat / (vhat.sqrt() + cfg.eps) + cfg.weight_decay * w[i]);
            }
        }
        Ok(())
    }
}

/// Scales all gradients so their global L2 norm is at most `max_norm`;
/// returns the norm before scaling.
pub fn clip_grad_norm(store: &mut ParamStore, max_norm: f64) -> Result<f64> {
    let norm = store
        .params()
        .iter()
        .flat_map(|p| p.grad.data())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for p in store.params_mut()? {
            for g in p.grad.data_mut() {
                *g *= s;
            }
        }
    }
    Ok(norm)
}
