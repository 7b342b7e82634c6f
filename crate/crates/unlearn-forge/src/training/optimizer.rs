//! SGD and Adam updates over the parameter tree, in either direction.
//!
//! Both optimizers apply `step(grads)` to the parameters: subtracted for
//! descent (training), added for ascent (unlearning). Adam keeps first and
//! second moment trees congruent with the parameters; SGD keeps none, which
//! is exactly why unlearning uses it (a fresh run has no stale state to
//! contaminate the ascent).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Gradients, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Which way the update moves the parameters along the gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Descent,
    Ascent,
}

/// Optimizer configuration plus its mutable state. The moment trees are
/// allocated lazily on the first Adam update so a fresh state is cheap to
/// construct and serialize.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Number of updates applied so far.
    pub step: u64,
    #[serde(skip)]
    pub(crate) m: Option<ModelParams>,
    #[serde(skip)]
    pub(crate) v: Option<ModelParams>,
}

impl OptimizerState {
    pub fn sgd(lr: f64) -> OptimizerState {
        OptimizerState {
            kind: OptimizerKind::Sgd,
            lr,
            beta1: 0.0,
            beta2: 0.0,
            eps: 0.0,
            step: 0,
            m: None,
            v: None,
        }
    }

    pub fn adam(lr: f64) -> OptimizerState {
        OptimizerState {
            kind: OptimizerKind::Adam,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: None,
            v: None,
        }
    }

    /// lr = 0 is allowed: it makes every update a no-op, which the unlearning
    /// identity tests rely on.
    pub fn validate(&self) -> Result<()> {
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(Error::config(format!("learning rate {} is not finite and >= 0", self.lr)));
        }
        if self.kind == OptimizerKind::Adam {
            for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
                if !(0.0..1.0).contains(&b) {
                    return Err(Error::config(format!("{name} = {b} outside [0, 1)")));
                }
            }
            if !(self.eps > 0.0) {
                return Err(Error::config(format!("eps = {} must be positive", self.eps)));
            }
        }
        Ok(())
    }

    /// Same kind and hyperparameters with the mutable state wound back to
    /// zero; what a replay starts from.
    pub fn reset(&self) -> OptimizerState {
        OptimizerState { step: 0, m: None, v: None, ..self.clone() }
    }

    /// Applies one transformed gradient step and advances the state exactly
    /// once. Descent: theta -= step(g). Ascent: theta += step(g).
    pub fn apply_update(
        &mut self,
        params: &mut ModelParams,
        grads: &Gradients,
        direction: Direction,
    ) -> Result<()> {
        if !params.congruent(grads) {
            return Err(Error::config("gradient tree is not shape-congruent with the parameters"));
        }
        let sign = match direction {
            Direction::Descent => -1.0,
            Direction::Ascent => 1.0,
        };
        match self.kind {
            OptimizerKind::Sgd => {
                let lr = self.lr;
                params.zip_apply(grads, |ps, gs| {
                    for (p, &g) in ps.iter_mut().zip(gs) {
                        *p += sign * lr * g;
                    }
                });
            }
            OptimizerKind::Adam => {
                if self.m.is_none() {
                    self.m = Some(params.zeros_like());
                    self.v = Some(params.zeros_like());
                }
                let m = self.m.as_mut().unwrap();
                let v = self.v.as_mut().unwrap();
                if !m.congruent(params) || !v.congruent(params) {
                    return Err(Error::config("optimizer moments do not match the parameter shapes"));
                }
                let t = (self.step + 1) as f64;
                let (b1, b2) = (self.beta1, self.beta2);
                let bc1 = 1.0 - b1.powf(t);
                let bc2 = 1.0 - b2.powf(t);
                let (lr, eps) = (self.lr, self.eps);
                params.zip_apply2(m, v, grads, |ps, ms, vs, gs| {
                    for (((p, m), v), &g) in ps.iter_mut().zip(ms.iter_mut()).zip(vs.iter_mut()).zip(gs) {
                        *m = b1 * *m + (1.0 - b1) * g;
                        *v = b2 * *v + (1.0 - b2) * g * g;
                        let m_hat = *m / bc1;
                        let v_hat = *v / bc2;
                        *p += sign * lr * m_hat / (v_hat.sqrt() + eps);
                    }
                });
            }
        }
        self.step += 1;
        Ok(())
    }
}
