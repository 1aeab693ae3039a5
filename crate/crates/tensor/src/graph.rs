//! Define-by-run gradient tape.
//!
//! Every operation appends a node holding its output value. When any input
//! requires a gradient, the node also keeps a [`Backward`] rule. Nodes are
//! pushed in execution order, so the node list is already topologically
//! sorted and [`Graph::backward`] walks it once in reverse.

use std::borrow::Cow;

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::params::{GradStore, ParamId, ParamStore};
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

/// Read access to forward values while a backward rule runs.
pub struct BackwardCtx<'g, T: Element> {
    values: &'g [Cow<'g, Tensor<T>>],
    inputs: &'g [usize],
    output: &'g Tensor<T>,
}

impl<'g, T: Element> BackwardCtx<'g, T> {
    pub fn input(&self, k: usize) -> &Tensor<T> {
        &self.values[self.inputs[k]]
    }

    pub fn output(&self) -> &Tensor<T> {
        self.output
    }
}

/// Lazily allocated gradient buffers for an op's inputs.
pub struct GradSink<'g, T: Element> {
    values: &'g [Cow<'g, Tensor<T>>],
    inputs: &'g [usize],
    requires: &'g [bool],
    grads: &'g mut [Option<Vec<T>>],
}

impl<T: Element> GradSink<'_, T> {
    /// Buffer to accumulate the gradient of input `k` into, or `None` when
    /// that input does not require a gradient.
    pub fn get(&mut self, k: usize) -> Option<&mut [T]> {
        let idx = self.inputs[k];
        if !self.requires[idx] {
            return None;
        }
        let len = self.values[idx].len();
        Some(self.grads[idx].get_or_insert_with(|| vec![T::zero(); len]))
    }

    pub fn wants(&self, k: usize) -> bool {
        self.requires[self.inputs[k]]
    }
}

/// Backward rule of a recorded operation.
pub trait Backward<T: Element> {
    fn name(&self) -> &'static str;

    /// Adds `∂loss/∂input` for every input into `sink`, given
    /// `grad_out = ∂loss/∂output`.
    fn backward(&self, ctx: &BackwardCtx<'_, T>, grad_out: &[T], sink: &mut GradSink<'_, T>);
}

struct Meta<'a, T: Element> {
    inputs: Vec<usize>,
    op: Option<Box<dyn Backward<T> + 'a>>,
    param: Option<ParamId>,
}

pub struct Graph<'a, T: Element> {
    params: Option<&'a ParamStore<T>>,
    param_nodes: Vec<Option<Var>>,
    values: Vec<Cow<'a, Tensor<T>>>,
    meta: Vec<Meta<'a, T>>,
    requires: Vec<bool>,
    grads: Vec<Option<Vec<T>>>,
    params_require_grad: bool,
}

impl<'a, T: Element> Default for Graph<'a, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, T: Element> Graph<'a, T> {
    pub fn new() -> Self {
        Self {
            params: None,
            param_nodes: Vec::new(),
            values: Vec::new(),
            meta: Vec::new(),
            requires: Vec::new(),
            grads: Vec::new(),
            params_require_grad: true,
        }
    }

    /// Graph whose [`Graph::param`] leaves borrow from `params`.
    pub fn with_params(params: &'a ParamStore<T>) -> Self {
        Self {
            params: Some(params),
            param_nodes: vec![None; params.len()],
            ..Self::new()
        }
    }

    /// Graph for evaluation only: parameters are read as constants, so no
    /// operation keeps its backward rule.
    pub fn inference(params: &'a ParamStore<T>) -> Self {
        Self {
            params_require_grad: false,
            ..Self::with_params(params)
        }
    }

    fn push(&mut self, value: Cow<'a, Tensor<T>>, meta: Meta<'a, T>, requires: bool) -> Var {
        self.values.push(value);
        self.meta.push(meta);
        self.requires.push(requires);
        self.grads.push(None);
        Var(self.values.len() - 1)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(
            Cow::Owned(value),
            Meta {
                inputs: vec![],
                op: None,
                param: None,
            },
            false,
        )
    }

    /// Leaf that receives a gradient, readable via [`Graph::grad`].
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(
            Cow::Owned(value),
            Meta {
                inputs: vec![],
                op: None,
                param: None,
            },
            true,
        )
    }

    /// Leaf for a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        let store = self.params.expect("graph built without a parameter store");
        if let Some(v) = self.param_nodes[id.0] {
            return v;
        }
        let v = self.push(
            Cow::Borrowed(store.get(id)),
            Meta {
                inputs: vec![],
                op: None,
                param: Some(id),
            },
            self.params_require_grad,
        );
        self.param_nodes[id.0] = Some(v);
        v
    }

    /// Appends an operation output. The backward rule is kept only when some
    /// input requires a gradient.
    pub fn record(&mut self, value: Tensor<T>, inputs: &[Var], op: Box<dyn Backward<T> + 'a>) -> Var {
        let requires = inputs.iter().any(|v| self.requires[v.0]);
        let meta = Meta {
            inputs: inputs.iter().map(|v| v.0).collect(),
            op: requires.then_some(op),
            param: None,
        };
        self.push(Cow::Owned(value), meta, requires)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.values[v.0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.values[v.0].shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.requires[v.0]
    }

    /// Gradient held by a leaf after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads[v.0].as_deref()
    }

    pub fn num_nodes(&self) -> usize {
        self.values.len()
    }

    /// Reverse pass from a scalar `loss`. Leaf gradients accumulate across
    /// calls. Parameter gradients are moved into `grads` when it is given,
    /// and otherwise stay on the leaf like any other.
    pub fn backward(&mut self, loss: Var, mut grads: Option<&mut GradStore<T>>) -> Result<()> {
        let loss_value = &self.values[loss.0];
        if !loss_value.is_scalar() {
            return Err(TensorError::NonScalarLoss(loss_value.shape().to_vec()));
        }
        if !self.requires[loss.0] {
            return Ok(());
        }
        // Intermediate gradients from an earlier pass were consumed; only
        // leaves keep theirs.
        let seed = match self.grads[loss.0].take() {
            Some(mut g) if self.meta[loss.0].op.is_none() => {
                g[0] += T::one();
                g
            }
            _ => vec![T::one()],
        };
        self.grads[loss.0] = Some(seed);

        for i in (0..=loss.0).rev() {
            if !self.requires[i] {
                continue;
            }
            let meta = &self.meta[i];
            match &meta.op {
                Some(op) => {
                    let Some(grad_out) = self.grads[i].take() else {
                        continue;
                    };
                    let (values, out) = (&self.values[..], &self.values[i]);
                    let ctx = BackwardCtx {
                        values,
                        inputs: &meta.inputs,
                        output: out,
                    };
                    let mut sink = GradSink {
                        values,
                        inputs: &meta.inputs,
                        requires: &self.requires,
                        grads: &mut self.grads,
                    };
                    op.backward(&ctx, &grad_out, &mut sink);
                }
                None => {
                    if let (Some(id), Some(store)) = (meta.param, grads.as_deref_mut()) {
                        if let Some(g) = self.grads[i].take() {
                            store.accumulate(id, &g);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
