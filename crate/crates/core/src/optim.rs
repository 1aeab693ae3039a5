//! Adam and AdamW with optional global-norm gradient clipping.

use serde::{Deserialize, Serialize};
use tensor::{Element, GradStore, ParamStore};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimKind {
    /// Weight decay added to the gradient (L2 penalty).
    Adam,
    /// Weight decay applied to the parameters, outside the moments.
    AdamW,
}

impl OptimKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimKind::Adam => "adam",
            OptimKind::AdamW => "adamw",
        }
    }
}

impl std::str::FromStr for OptimKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimKind::Adam),
            "adamw" => Ok(OptimKind::AdamW),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub kind: OptimKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub clip_norm: Option<f64>,
}

impl OptimConfig {
    pub fn new(kind: OptimKind, lr: f64, weight_decay: f64) -> Self {
        Self {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            clip_norm: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        // lr = 0 is allowed: it is how the update path is exercised
        // without moving anything.
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be ≥ 0, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("weight decay must be ≥ 0, got {}", self.weight_decay)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::Config("betas must lie in [0, 1) and eps must be positive".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip norm must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

/// Rescales all gradients together so their global L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm<T: Element>(grads: &mut GradStore<T>, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(T::of(max_norm / norm));
    }
    norm
}

#[derive(Clone, Debug)]
pub struct Optimizer {
    cfg: OptimConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new<T: Element>(cfg: OptimConfig, params: &ParamStore<T>) -> Result<Self> {
        cfg.validate()?;
        let zeros = || params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        Ok(Self {
            cfg,
            step: 0,
            m: zeros(),
            v: zeros(),
        })
    }

    pub fn config(&self) -> &OptimConfig {
        &self.cfg
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update from the gradients in `grads`, which must come from a
    /// backward pass. Clipping, when configured, happens first and
    /// modifies `grads`.
    pub fn step<T: Element>(&mut self, params: &mut ParamStore<T>, grads: &mut GradStore<T>) -> Result<()> {
        if !grads.is_populated() {
            return Err(Error::NoGradients);
        }
        if let Some(max_norm) = self.cfg.clip_norm {
            clip_global_norm(grads, max_norm);
        }
        self.step += 1;
        let OptimConfig {
            kind,
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
            ..
        } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (k, id) in params.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let grad = grads.get(id);
            let value = params.get_mut(id).data_mut();
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..value.len() {
                let mut theta = value[i].as_f64();
                let mut g = grad[i].as_f64();
                match kind {
                    OptimKind::Adam => g += weight_decay * theta,
                    OptimKind::AdamW => theta *= 1.0 - lr * weight_decay,
                }
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                theta -= lr * m_hat / (v_hat.sqrt() + eps);
                value[i] = T::of(theta);
            }
        }
        Ok(())
    }
}
