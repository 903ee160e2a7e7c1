use serde::{Deserialize, Serialize};

use super::{ParamSet, Tensor};
use crate::error::{Error, Result};

fn check_finite(params: &ParamSet) -> Result<()> {
    for p in params.iter() {
        if !p.grad().is_finite() {
            return Err(Error::NonFiniteGradient(p.name().to_string()));
        }
    }
    Ok(())
}

/// `data <- data - lr * grad` for every parameter, then zero the grads.
pub fn sgd_step(params: &mut ParamSet, lr: f64) -> Result<()> {
    check_finite(params)?;
    for p in params.iter_mut() {
        let (value, grad) = split(p);
        for (v, g) in value.data_mut().iter_mut().zip(grad.data()) {
            *v -= lr * g;
        }
    }
    params.zero_grad();
    params.bump_version();
    Ok(())
}

fn split(p: &mut super::Param) -> (&mut Tensor, Tensor) {
    let grad = p.grad().clone();
    (p.value_mut(), grad)
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(params: &mut ParamSet, max_norm: f64) -> f64 {
    let norm = params.grad_norm();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for p in params.iter_mut() {
            p.grad_mut().data_mut().iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Stateful optimizer used by the trainer: optional clipping, then SGD or Adam.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    clip: Option<f64>,
    moments: Vec<(Tensor, Tensor)>,
    steps: u64,
}

impl Optimizer {
    pub const ADAM_BETA1: f64 = 0.9;
    pub const ADAM_BETA2: f64 = 0.999;
    pub const ADAM_EPS: f64 = 1e-8;

    pub fn new(kind: OptimizerKind, lr: f64, clip: Option<f64>) -> Result<Self> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be finite and >= 0, got {lr}")));
        }
        Ok(Self {
            kind,
            lr,
            clip,
            moments: Vec::new(),
            steps: 0,
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// One update. Returns the pre-clip gradient norm.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<f64> {
        check_finite(params)?;
        let norm = match self.clip {
            Some(c) => clip_grad_norm(params, c),
            None => params.grad_norm(),
        };
        match self.kind {
            OptimizerKind::Sgd => sgd_step(params, self.lr)?,
            OptimizerKind::Adam => self.adam(params),
        }
        Ok(norm)
    }

    fn adam(&mut self, params: &mut ParamSet) {
        if self.moments.len() != params.len() {
            self.moments = params
                .iter()
                .map(|p| {
                    let (r, c) = p.value().shape();
                    (Tensor::zeros(r, c), Tensor::zeros(r, c))
                })
                .collect();
        }
        self.steps += 1;
        let t = self.steps as i32;
        let bc1 = 1.0 - Self::ADAM_BETA1.powi(t);
        let bc2 = 1.0 - Self::ADAM_BETA2.powi(t);
        for (p, (m, v)) in params.iter_mut().zip(&mut self.moments) {
            let grad = p.grad().clone();
            let value = p.value_mut();
            for (((x, g), mi), vi) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = Self::ADAM_BETA1 * *mi + (1.0 - Self::ADAM_BETA1) * g;
                *vi = Self::ADAM_BETA2 * *vi + (1.0 - Self::ADAM_BETA2) * g * g;
                let mh = *mi / bc1;
                let vh = *vi / bc2;
                *x -= self.lr * mh / (vh.sqrt() + Self::ADAM_EPS);
            }
        }
        params.zero_grad();
        params.bump_version();
    }
}
