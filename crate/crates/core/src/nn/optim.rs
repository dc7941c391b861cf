use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::layers::Param;
use super::{NnError, Tensor};

/// One Adam update on raw slices; `t` is the 1-based step count.
#[allow(clippy::too_many_arguments)]
pub fn adam_step(param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], t: u64, lr: f64, b1: f64, b2: f64, eps: f64) {
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);
    for i in 0..param.len() {
        m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
        v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
        let mh = m[i] / c1;
        let vh = v[i] / c2;
        param[i] -= lr * mh / (vh.sqrt() + eps);
    }
}

/// Adam over a parameter list; frozen parameters are skipped.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &[Param], lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: params.iter().map(|p| vec![0.0; p.value.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.value.numel()]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// `grads[i]` is the gradient for `params[i]` (absent = no update).
    pub fn step(&mut self, params: &mut [Param], grads: &[Option<&Tensor>]) -> Result<(), NnError> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(NnError::ShapeMismatch("optimizer state does not match parameters".into()));
        }
        self.t += 1;
        for (i, p) in params.iter_mut().enumerate() {
            let Some(g) = grads[i] else { continue };
            if !p.trainable {
                continue;
            }
            if g.numel() != self.m[i].len() {
                return Err(NnError::ShapeMismatch(format!("gradient {i} has the wrong size")));
            }
            let data = Arc::make_mut(&mut p.value).data_mut();
            adam_step(data, g.data(), &mut self.m[i], &mut self.v[i], self.t, self.lr, self.beta1, self.beta2, self.eps);
        }
        Ok(())
    }
}

/// Learning-rate plateau and early-stopping rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub lr0: f64,
    pub plateau_patience: usize,
    pub lr_factor: f64,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            lr0: 1e-3,
            plateau_patience: 3,
            lr_factor: 0.7,
            early_stop_patience: 5,
            max_epochs: 100,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return Err(NnError::InvalidConfig(format!("lr_factor={}", self.lr_factor)));
        }
        if self.plateau_patience == 0 || self.early_stop_patience == 0 || self.batch_size == 0 {
            return Err(NnError::InvalidConfig("patience and batch size must be ≥ 1".into()));
        }
        if !(self.lr0 > 0.0) {
            return Err(NnError::InvalidConfig(format!("lr0={}", self.lr0)));
        }
        Ok(())
    }
}

/// Running state of the plateau schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauState {
    pub lr: f64,
    pub best: f64,
    /// Epochs since the last strict improvement (early-stopping counter).
    pub since_best: usize,
    /// Non-improving epochs since the last improvement or LR reduction.
    pub since_reduce: usize,
    pub epochs: usize,
}

impl PlateauState {
    pub fn new(sched: &TrainSchedule) -> Self {
        PlateauState {
            lr: sched.lr0,
            best: f64::INFINITY,
            since_best: 0,
            since_reduce: 0,
            epochs: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleDecision {
    pub lr: f64,
    pub stop: bool,
    pub improved: bool,
}

impl PlateauState {
    /// Records one epoch's validation loss.
    pub fn observe(&mut self, val_loss: f64, sched: &TrainSchedule) -> ScheduleDecision {
        self.epochs += 1;
        let improved = val_loss < self.best;
        if improved {
            self.best = val_loss;
            self.since_best = 0;
            self.since_reduce = 0;
        } else {
            self.since_best += 1;
            self.since_reduce += 1;
            if self.since_reduce >= sched.plateau_patience {
                self.lr *= sched.lr_factor;
                self.since_reduce = 0;
            }
        }
        ScheduleDecision {
            lr: self.lr,
            stop: self.since_best >= sched.early_stop_patience,
            improved,
        }
    }
}

/// Replays a validation-loss history and returns the resulting decision.
pub fn schedule_step(history: &[f64], sched: &TrainSchedule) -> Result<ScheduleDecision, NnError> {
    let mut state = PlateauState::new(sched);
    let mut last = None;
    for &l in history {
        last = Some(state.observe(l, sched));
    }
    last.ok_or_else(|| NnError::InvalidConfig("empty loss history".into()))
}
