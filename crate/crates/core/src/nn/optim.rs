//! SGD with momentum and inverse-time learning-rate decay.

use serde::{Deserialize, Serialize};

use super::Param;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SgdConfig {
    pub learning_rate: f32,
    /// Per-update decay: the rate used at step `t` is `lr / (1 + decay * t)`.
    pub decay: f32,
    pub momentum: f32,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 0.001,
            decay: 0.001,
            momentum: 0.9,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Validation(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            return Err(Error::Validation(format!("decay must be >= 0, got {}", self.decay)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Validation(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// Optimizer configuration plus one velocity per trainable parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: SgdConfig,
    /// Number of completed updates.
    pub step: u64,
    pub velocities: Vec<(String, Tensor)>,
}

impl OptimizerState {
    pub fn new(config: SgdConfig) -> Result<Self> {
        config.validate()?;
        Ok(OptimizerState {
            config,
            step: 0,
            velocities: Vec::new(),
        })
    }

    /// Learning rate the next update will use.
    pub fn current_lr(&self) -> f32 {
        (f64::from(self.config.learning_rate) / (1.0 + f64::from(self.config.decay) * self.step as f64))
            as f32
    }

    /// `v <- momentum * v - lr * g; p <- p + v` for every trainable
    /// parameter, then advances the step counter.
    ///
    /// Gradients are validated up front, so a non-finite gradient leaves all
    /// parameters untouched.
    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<()> {
        let trainable: Vec<&mut &mut Param> = params.iter_mut().filter(|p| p.trainable).collect();
        for p in &trainable {
            if let Some(i) = p.grad.first_non_finite() {
                return Err(Error::NumericFailure(format!(
                    "gradient of {} is non-finite at coordinate {i}",
                    p.name
                )));
            }
        }
        if self.velocities.is_empty() {
            self.velocities = trainable
                .iter()
                .map(|p| (p.name.clone(), p.value.zeros_like()))
                .collect();
        }
        if self.velocities.len() != trainable.len() {
            return Err(Error::InvalidShape(format!(
                "optimizer tracks {} velocities but {} trainable parameters were given",
                self.velocities.len(),
                trainable.len()
            )));
        }
        for ((name, v), p) in self.velocities.iter().zip(&trainable) {
            if *name != p.name || v.shape() != p.value.shape() {
                return Err(Error::InvalidShape(format!(
                    "velocity {name} {:?} does not match parameter {} {:?}",
                    v.shape(),
                    p.name,
                    p.value.shape()
                )));
            }
        }
        let lr = self.current_lr();
        let momentum = self.config.momentum;
        for ((_, v), p) in self.velocities.iter_mut().zip(trainable) {
            let Param { value, grad, .. } = &mut **p;
            for ((vi, pi), gi) in v.data_mut().iter_mut().zip(value.data_mut()).zip(grad.data()) {
                *vi = momentum * *vi - lr * gi;
                *pi += *vi;
            }
        }
        self.step += 1;
        Ok(())
    }
}

/// Functional form of [`OptimizerState::step`].
pub fn sgd_step(params: &mut [Param], state: &mut OptimizerState) -> Result<()> {
    let mut refs: Vec<&mut Param> = params.iter_mut().collect();
    state.step(&mut refs)
}
