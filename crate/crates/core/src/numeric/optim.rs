use serde::{Deserialize, Serialize};

use super::{NumericError, ParamSet, Tensor};

/// Step-decay schedule: the rate is multiplied by `decay_rate` once for each
/// entry of `decay_epochs` already reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub decay_epochs: Vec<usize>,
    pub decay_rate: f64,
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        Self {
            base_lr: lr,
            decay_epochs: vec![],
            decay_rate: 1.0,
        }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let hits = self.decay_epochs.iter().filter(|&&e| epoch >= e).count();
        self.base_lr * self.decay_rate.powi(hits as i32)
    }
}

/// Gradient descent with heavy-ball momentum.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    pub schedule: LrSchedule,
    pub momentum: f64,
    velocity: Vec<Tensor>,
    epoch: usize,
}

impl Sgd {
    pub fn new(schedule: LrSchedule, momentum: f64) -> Result<Self, NumericError> {
        if schedule.base_lr < 0.0 || !schedule.base_lr.is_finite() {
            return Err(NumericError::InvalidHyperparameter(format!(
                "learning rate {}",
                schedule.base_lr
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(NumericError::InvalidHyperparameter(format!(
                "momentum {momentum}"
            )));
        }
        Ok(Self {
            schedule,
            momentum,
            velocity: Vec::new(),
            epoch: 0,
        })
    }

    pub fn set_epoch(&mut self, epoch: usize) {
        self.epoch = epoch;
    }

    pub fn lr(&self) -> f64 {
        self.schedule.lr_at(self.epoch)
    }

    /// `v <- momentum * v + g; p <- p - lr * v`. Non-finite gradients leave
    /// parameters and momentum untouched.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor]) -> Result<(), NumericError> {
        if grads.len() != params.len() {
            return Err(NumericError::ParamLayout(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for (id, g) in params.ids().zip(grads) {
            if g.shape() != params.get(id).shape() {
                return Err(NumericError::ShapeMismatch {
                    op: "sgd_step",
                    left: params.get(id).shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
            if !g.is_finite() {
                return Err(NumericError::NonFinite(params.name(id).to_string()));
            }
        }
        if self.velocity.is_empty() {
            self.velocity = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        }
        let lr = self.lr();
        for ((p, v), g) in params.tensors_mut().iter_mut().zip(&mut self.velocity).zip(grads) {
            for ((pv, vv), gv) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                *vv = self.momentum * *vv + gv;
                *pv -= lr * *vv;
            }
        }
        Ok(())
    }
}
