//! SGD with momentum, weight decay, poly learning-rate policy, and per-group
//! learning-rate multipliers (a multiplier of zero freezes the group).

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::checkpoint::{read_entries, write_entries, TensorData};
use crate::model::{Entry, LayerGroup};

/// `base_lr * (1 - iter/max_iter)^power`.
pub fn poly_lr(base_lr: f64, iter: u64, max_iter: u64, power: f64) -> f64 {
    debug_assert!(max_iter >= 1 && iter <= max_iter);
    base_lr * (1.0 - iter as f64 / max_iter as f64).powf(power)
}

pub struct Optimizer {
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub power: f64,
    pub iter: u64,
    pub max_iter: u64,
    velocities: HashMap<String, Vec<f32>>,
    group_lr_multipliers: HashMap<LayerGroup, f64>,
    group_weight_decay: HashMap<LayerGroup, f64>,
}

impl Optimizer {
    pub fn new(base_lr: f64, momentum: f64, weight_decay: f64, power: f64, max_iter: u64) -> Self {
        Optimizer {
            base_lr,
            momentum,
            weight_decay,
            power,
            iter: 0,
            max_iter: max_iter.max(1),
            velocities: HashMap::new(),
            group_lr_multipliers: HashMap::new(),
            group_weight_decay: HashMap::new(),
        }
    }

    /// Zero freezes the group: its parameters and velocities are bitwise
    /// untouched by `step`.
    pub fn set_group_multiplier(&mut self, group: LayerGroup, mult: f64) {
        self.group_lr_multipliers.insert(group, mult);
    }

    pub fn set_group_weight_decay(&mut self, group: LayerGroup, wd: f64) {
        self.group_weight_decay.insert(group, wd);
    }

    pub fn multiplier(&self, group: LayerGroup) -> f64 {
        self.group_lr_multipliers.get(&group).copied().unwrap_or(1.0)
    }

    pub fn current_lr(&self) -> f64 {
        poly_lr(self.base_lr, self.iter, self.max_iter, self.power)
    }

    /// One update over the given learnable parameters:
    /// `v <- momentum*v + (grad + wd*w); w <- w - lr*mult(group)*v`,
    /// then every gradient is cleared and the iteration counter advances.
    ///
    /// Weight decay applies to decayable entries (conv weights) only.
    pub fn step(&mut self, params: &[Entry<f32>]) -> Result<f64> {
        let lr = self.current_lr();
        for e in params.iter().filter(|e| e.learnable()) {
            let mult = self.multiplier(e.group);
            if mult == 0.0 {
                continue;
            }
            let grad = e.tensor.grad().ok_or_else(|| {
                Error::Autodiff(format!("parameter {} has no gradient at step()", e.path))
            })?;
            let wd = if e.decayable() {
                self.group_weight_decay.get(&e.group).copied().unwrap_or(self.weight_decay) as f32
            } else {
                0.0
            };
            let eta = (lr * mult) as f32;
            let momentum = self.momentum as f32;
            let mut w = e.tensor.to_vec();
            let v = self
                .velocities
                .entry(e.path.clone())
                .or_insert_with(|| vec![0.0f32; w.len()]);
            for i in 0..w.len() {
                v[i] = momentum * v[i] + (grad[i] + wd * w[i]);
                w[i] -= eta * v[i];
            }
            e.tensor.set_data(&w)?;
        }
        for e in params {
            e.tensor.clear_grad();
        }
        self.iter += 1;
        Ok(lr)
    }

    /// Persist iteration counters and velocity buffers (same container format
    /// as model checkpoints, under `optim.*` paths).
    pub fn save_state(&self, path: &Path) -> Result<()> {
        let mut entries = vec![
            (
                "optim.iter".to_string(),
                TensorData { shape: vec![1], values: vec![self.iter as f32] },
            ),
            (
                "optim.max_iter".to_string(),
                TensorData { shape: vec![1], values: vec![self.max_iter as f32] },
            ),
        ];
        let mut names: Vec<&String> = self.velocities.keys().collect();
        names.sort();
        for name in names {
            let v = &self.velocities[name];
            entries.push((
                format!("optim.velocity.{name}"),
                TensorData { shape: vec![v.len()], values: v.clone() },
            ));
        }
        write_entries(path, &entries)
    }

    pub fn load_state(&mut self, path: &Path) -> Result<()> {
        for (name, data) in read_entries(path)? {
            match name.as_str() {
                "optim.iter" => self.iter = data.values[0] as u64,
                "optim.max_iter" => self.max_iter = (data.values[0] as u64).max(1),
                other => {
                    if let Some(param) = other.strip_prefix("optim.velocity.") {
                        self.velocities.insert(param.to_string(), data.values);
                    }
                }
            }
        }
        Ok(())
    }
}
