use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub max_lr: f64,
    /// `None` means `min(total_steps / 10, 2000)`.
    pub warmup_steps: Option<usize>,
    pub total_steps: usize,
    pub batch_size: usize,
    pub final_lr_fraction: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            clip_norm: 1.0,
            max_lr: 1e-3,
            warmup_steps: None,
            total_steps: 1000,
            batch_size: 8,
            final_lr_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn warmup(&self) -> usize {
        self.warmup_steps.unwrap_or((self.total_steps / 10).min(2000))
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.max_lr.is_finite() && self.max_lr >= 0.0) {
            return Err(Error::Config(format!("max_lr {} must be a non-negative number", self.max_lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("betas must lie in [0, 1)".into()));
        }
        if self.clip_norm <= 0.0 {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        if self.total_steps > 0 && self.warmup() >= self.total_steps {
            return Err(Error::Config(format!(
                "warmup_steps {} must be smaller than total_steps {}",
                self.warmup(),
                self.total_steps
            )));
        }
        Ok(())
    }
}

/// Linear warmup to `max_lr`, then cosine decay to `final_lr_fraction · max_lr`.
pub fn lr_at(step: usize, cfg: &TrainingConfig) -> Result<f64> {
    let total = cfg.total_steps;
    let warmup = cfg.warmup();
    if warmup >= total {
        return Err(Error::Config(format!("warmup_steps {warmup} must be smaller than total_steps {total}")));
    }
    if step > total {
        return Err(Error::Config(format!("step {step} beyond total_steps {total}")));
    }
    if step < warmup {
        return Ok(cfg.max_lr * step as f64 / warmup as f64);
    }
    let progress = (step - warmup) as f64 / (total - warmup) as f64;
    let f = cfg.final_lr_fraction;
    Ok(cfg.max_lr * (f + (1.0 - f) * 0.5 * (1.0 + (PI * progress).cos())))
}

pub fn global_norm(grads: &[f64]) -> f64 {
    grads.iter().map(|g| g * g).sum::<f64>().sqrt()
}

/// Rescales `grads` in place to global norm `clip_norm` if it is larger;
/// returns the norm before clipping.
pub fn clip_gradients(grads: &mut [f64], clip_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > clip_norm {
        let s = clip_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// First and second moment estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Number of steps taken so far.
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

/// One AdamW update with bias correction. Weight decay is applied only where
/// `decay_mask` is true.
pub fn adamw_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64, decay_mask: &[bool], cfg: &TrainingConfig) -> Result<()> {
    let n = params.len();
    if grads.len() != n || state.m.len() != n || state.v.len() != n || decay_mask.len() != n {
        return Err(Error::Config("optimizer state does not match parameter count".into()));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..n {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        let decay = if decay_mask[i] { cfg.weight_decay * params[i] } else { 0.0 };
        params[i] -= lr * (m_hat / (v_hat.sqrt() + cfg.eps) + decay);
    }
    Ok(())
}
