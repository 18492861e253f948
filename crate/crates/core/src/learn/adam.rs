use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Epoch at which the learning rate is multiplied by `decay_factor`.
    pub decay_epoch: usize,
    pub decay_factor: f64,
}

impl AdamConfig {
    /// 1e-5, divided by ten after 20 epochs.
    pub fn paper() -> Self {
        AdamConfig {
            learning_rate: 1e-5,
            ..Self::default()
        }
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        if epoch >= self.decay_epoch {
            self.learning_rate * self.decay_factor
        } else {
            self.learning_rate
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Configuration(format!("learning_rate = {} must be non-negative", self.learning_rate)));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::Configuration("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0) || !(self.decay_factor > 0.0) {
            return Err(Error::Configuration("epsilon and decay_factor must be positive".into()));
        }
        Ok(())
    }
}

impl Default for AdamConfig {
    /// Desk-scale default: 1e-3 with the same step schedule.
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decay_epoch: 20,
            decay_factor: 0.1,
        }
    }
}

/// First and second moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update at learning rate `lr`. A gradient with a
/// non-finite entry leaves weights and moments untouched.
pub fn adam_step<T: Real>(
    weights: &mut [T],
    grad: &[T],
    moments: &mut AdamState<T>,
    cfg: &AdamConfig,
    lr: f64,
) -> Result<()> {
    if weights.len() != grad.len() || moments.m.len() != grad.len() || moments.v.len() != grad.len() {
        return Err(Error::InvalidArgument(format!(
            "Adam shapes differ: weights {}, gradient {}, moments {}",
            weights.len(),
            grad.len(),
            moments.m.len()
        )));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numerical(format!("non-finite gradient at coordinate {i}; update refused")));
    }
    moments.step += 1;
    let b1 = T::lit(cfg.beta1);
    let b2 = T::lit(cfg.beta2);
    let t = moments.step as i32;
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    let lr = T::lit(lr);
    let eps = T::lit(cfg.epsilon);
    for i in 0..weights.len() {
        let g = grad[i];
        moments.m[i] = b1 * moments.m[i] + (T::one() - b1) * g;
        moments.v[i] = b2 * moments.v[i] + (T::one() - b2) * g * g;
        let m_hat = moments.m[i] / c1;
        let v_hat = moments.v[i] / c2;
        weights[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
