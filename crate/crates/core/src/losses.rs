//! Classification criteria over `batch × classes` logits.
//!
//! Each criterion is recorded on the graph as one fused operation: the
//! forward pass computes log-softmax per row in f64 and keeps the gradient
//! with respect to the logits, so backward is a single scaling.

use serde::{Deserialize, Serialize};
use tensor::{Backward, BackwardCtx, Element, GradSink, Graph, TensorError, Var};

use crate::error::{Error, Result};

/// `w[c] = N / (K · counts[c])`: a class of average frequency gets weight 1.
pub fn balanced_class_weights(counts: &[usize]) -> Result<Vec<f64>> {
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::Data(format!("class {c} has no examples; balanced weights are undefined")));
    }
    let total: usize = counts.iter().sum();
    let k = counts.len() as f64;
    Ok(counts.iter().map(|&n| total as f64 / (k * n as f64)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Plain cross entropy.
    Ce,
    /// Cross entropy with balanced class weights.
    Wce,
    /// Focal loss with balanced class weights.
    Focal,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Ce => "ce",
            LossKind::Wce => "wce",
            LossKind::Focal => "focal",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ce" => Ok(LossKind::Ce),
            "wce" => Ok(LossKind::Wce),
            "focal" => Ok(LossKind::Focal),
            other => Err(Error::Config(format!("unknown loss {other:?} (expected ce, wce or focal)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FocalConfig {
    pub gamma: f64,
    pub alpha: Vec<f64>,
}

impl FocalConfig {
    pub fn new(gamma: f64, alpha: Vec<f64>) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::Config(format!("focal gamma must be ≥ 0, got {gamma}")));
        }
        if alpha.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::Config("focal alpha entries must be positive".into()));
        }
        Ok(Self { gamma, alpha })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Criterion {
    /// Cross entropy, optionally class weighted. The mean is normalized by
    /// the sum of the applied weights, so uniform weights of any size give
    /// plain cross entropy.
    CrossEntropy { weights: Option<Vec<f64>> },
    /// `−α_y (1 − p_y)^γ log p_y`, averaged over the batch (not over the
    /// weights), so γ = 0 matches weighted cross entropy with a batch mean.
    Focal(FocalConfig),
}

impl Criterion {
    /// Builds the criterion for `kind`; weighted variants take balanced
    /// weights from the training class counts.
    pub fn from_kind(kind: LossKind, gamma: f64, train_counts: &[usize]) -> Result<Self> {
        Ok(match kind {
            LossKind::Ce => Criterion::CrossEntropy { weights: None },
            LossKind::Wce => Criterion::CrossEntropy {
                weights: Some(balanced_class_weights(train_counts)?),
            },
            LossKind::Focal => Criterion::Focal(FocalConfig::new(gamma, balanced_class_weights(train_counts)?)?),
        })
    }

    /// Numerator and denominator of the batch loss; the loss is their
    /// ratio. Summing both over batches gives the loss of the union, so an
    /// epoch loss never depends on how the data was batched.
    pub fn sums<T: Element>(&self, logits: &[T], labels: &[usize]) -> Result<(f64, f64)> {
        let (num, den, _) = self.evaluate(logits, labels, false)?;
        Ok((num, den))
    }

    pub fn loss<T: Element>(&self, logits: &[T], labels: &[usize]) -> Result<f64> {
        let (num, den) = self.sums(logits, labels)?;
        Ok(num / den)
    }

    /// Records the mean loss on the graph.
    pub fn forward<'a, T: Element>(&self, g: &mut Graph<'a, T>, logits: Var, labels: &[usize]) -> Result<Var> {
        let shape = g.shape(logits).to_vec();
        if shape.len() != 2 || shape[0] != labels.len() {
            return Err(TensorError::InvalidShape {
                op: "loss",
                msg: format!("logits {shape:?} for {} labels", labels.len()),
            }
            .into());
        }
        let (num, den, grad) = self.evaluate(g.value(logits).data(), labels, true)?;
        let inv = 1.0 / den;
        let grad = grad.into_iter().map(|v| T::of(v * inv)).collect();
        let value = tensor::Tensor::scalar(T::of(num * inv));
        Ok(g.record(value, &[logits], Box::new(LossBackward { grad })))
    }

    fn classes(&self) -> Option<usize> {
        match self {
            Criterion::CrossEntropy { weights } => weights.as_ref().map(Vec::len),
            Criterion::Focal(f) => Some(f.alpha.len()),
        }
    }

    /// Returns (Σ per-example loss × weight, normaliser, ∂numerator/∂logits).
    fn evaluate<T: Element>(&self, logits: &[T], labels: &[usize], want_grad: bool) -> Result<(f64, f64, Vec<f64>)> {
        if labels.is_empty() {
            return Err(Error::Data("loss over an empty batch".into()));
        }
        if !logits.len().is_multiple_of(labels.len()) {
            return Err(Error::Data(format!("{} logits for {} labels", logits.len(), labels.len())));
        }
        let k = logits.len() / labels.len();
        if let Some(c) = self.classes() {
            if c != k {
                return Err(Error::Config(format!("criterion has {c} class weights but logits have {k} classes")));
            }
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite("loss input logits".into()).into());
        }
        let mut grad = if want_grad { vec![0.0; logits.len()] } else { Vec::new() };
        let (mut num, mut den) = (0.0, 0.0);
        let mut logp = vec![0.0; k];
        for (i, (row, &y)) in logits.chunks(k).zip(labels).enumerate() {
            if y >= k {
                return Err(Error::Data(format!("label {y} outside {k} classes")));
            }
            let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v.as_f64() - max).exp()).sum::<f64>().ln();
            for (lp, v) in logp.iter_mut().zip(row) {
                *lp = v.as_f64() - lse;
            }
            let (loss, coef, weight) = match self {
                Criterion::CrossEntropy { weights } => {
                    let w = weights.as_ref().map_or(1.0, |w| w[y]);
                    (-w * logp[y], w, w)
                }
                Criterion::Focal(FocalConfig { gamma, alpha }) => {
                    let p = logp[y].exp();
                    let q = 1.0 - p;
                    let a = alpha[y];
                    // d/dz_j of −a q^γ log p is c·(p_j − δ_jy) with
                    // c = a(q^γ − γ q^(γ−1) p log p); the second term
                    // vanishes as q → 0 (and for γ = 0).
                    let tail = if *gamma == 0.0 || q <= 0.0 {
                        0.0
                    } else {
                        gamma * q.powf(gamma - 1.0) * p * logp[y]
                    };
                    (-a * q.powf(*gamma) * logp[y], a * (q.powf(*gamma) - tail), 1.0)
                }
            };
            num += loss;
            den += weight;
            if want_grad {
                let out = &mut grad[i * k..(i + 1) * k];
                for (j, (o, lp)) in out.iter_mut().zip(&logp).enumerate() {
                    let target = if j == y { 1.0 } else { 0.0 };
                    *o = coef * (lp.exp() - target);
                }
            }
        }
        Ok((num, den, grad))
    }
}

struct LossBackward<T> {
    grad: Vec<T>,
}

impl<T: Element> Backward<T> for LossBackward<T> {
    fn name(&self) -> &'static str {
        "loss"
    }

    fn backward(&self, _ctx: &BackwardCtx<'_, T>, grad_out: &[T], sink: &mut GradSink<'_, T>) {
        let scale = grad_out[0];
        if let Some(g) = sink.get(0) {
            for (g, &d) in g.iter_mut().zip(&self.grad) {
                *g += d * scale;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_weights() {
        let w = balanced_class_weights(&[3, 1]).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-12 && (w[1] - 2.0).abs() < 1e-12);
        assert_eq!(balanced_class_weights(&[5, 5, 5]).unwrap(), [1.0, 1.0, 1.0]);
        assert_eq!(balanced_class_weights(&[30, 10]).unwrap(), w);
        assert!(balanced_class_weights(&[1, 0]).is_err());
    }

    #[test]
    fn uniform_logits_give_ln_k() {
        let ce = Criterion::CrossEntropy { weights: None };
        let loss = ce.loss(&[0.0f64; 20], &[4]).unwrap();
        assert!((loss - 20f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn focal_half_probability() {
        let focal = Criterion::Focal(FocalConfig::new(1.5, vec![1.0, 1.0]).unwrap());
        let loss = focal.loss(&[0.0f64, 0.0], &[0]).unwrap();
        assert!((loss - 0.5f64.powf(1.5) * 2f64.ln()).abs() < 1e-12);
        assert!((loss - 0.24507).abs() < 1e-5);
    }

    #[test]
    fn confident_correct_prediction_costs_nothing() {
        let focal = Criterion::Focal(FocalConfig::new(0.5, vec![1.0; 3]).unwrap());
        let ce = Criterion::CrossEntropy { weights: None };
        let logits = [60.0f64, 0.0, 0.0];
        assert!(focal.loss(&logits, &[0]).unwrap() < 1e-20);
        assert!(ce.loss(&logits, &[0]).unwrap() < 1e-20);
    }

    #[test]
    fn uniformly_scaled_weights_do_not_change_ce() {
        let logits = [0.3f64, -1.0, 2.0, 0.1, 0.1, 0.5];
        let a = Criterion::CrossEntropy { weights: Some(vec![1.0, 1.0, 1.0]) };
        let b = Criterion::CrossEntropy { weights: Some(vec![2.0, 2.0, 2.0]) };
        let plain = Criterion::CrossEntropy { weights: None };
        let l = plain.loss(&logits, &[2, 0]).unwrap();
        assert!((a.loss(&logits, &[2, 0]).unwrap() - l).abs() < 1e-15);
        assert!((b.loss(&logits, &[2, 0]).unwrap() - l).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let ce = Criterion::CrossEntropy { weights: None };
        assert!(ce.loss(&[f64::NAN, 0.0], &[0]).is_err());
        assert!(ce.loss(&[0.0f64, 0.0], &[2]).is_err());
        assert!(FocalConfig::new(-1.0, vec![1.0]).is_err());
        assert!(FocalConfig::new(1.0, vec![0.0]).is_err());
    }
}
