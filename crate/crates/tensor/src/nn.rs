//! Parameterized layers built from graph operations.
//!
//! Initialization: linear and convolution weights are Glorot-uniform,
//! biases zero, embeddings uniform in ±0.05 with a zero padding row, and
//! layer-norm scale one / shift zero. Parameters draw from the generator in
//! the order they are created.

use crate::element::Element;
use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::{ParamId, ParamStore};
use crate::rng::{uniform, Rng};
use crate::tensor::{Mask, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const EMBEDDING_INIT_RANGE: f64 = 0.05;

/// Uniform in ±√(6 / (fan_in + fan_out)).
pub fn glorot_uniform<T: Element>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| uniform(rng, -limit, limit))
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<T: Element>(ps: &mut ParamStore<T>, name: &str, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let weight = ps.add(format!("{name}.weight"), glorot_uniform(&[fan_in, fan_out], fan_in, fan_out, rng));
        let bias = ps.add(format!("{name}.bias"), Tensor::zeros(&[fan_out]));
        Self {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    pub fn forward<T: Element>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let (w, b) = (g.param(self.weight), g.param(self.bias));
        g.linear(x, w, Some(b))
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new<T: Element>(ps: &mut ParamStore<T>, name: &str, dim: usize) -> Self {
        let gamma = ps.add(format!("{name}.gamma"), Tensor::full(&[dim], T::one()));
        let beta = ps.add(format!("{name}.beta"), Tensor::zeros(&[dim]));
        Self {
            gamma,
            beta,
            eps: LAYER_NORM_EPS,
        }
    }

    pub fn forward<T: Element>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let (gm, bt) = (g.param(self.gamma), g.param(self.beta));
        g.layer_norm(x, gm, bt, self.eps)
    }
}

/// Token embedding table whose padding row stays zero and frozen.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamId,
    pub padding_idx: Option<usize>,
}

impl Embedding {
    pub fn new<T: Element>(
        ps: &mut ParamStore<T>,
        name: &str,
        vocab: usize,
        dim: usize,
        padding_idx: Option<usize>,
        rng: &mut Rng,
    ) -> Self {
        let mut table: Tensor<T> = Tensor::from_fn(&[vocab, dim], |_| {
            uniform(rng, -EMBEDDING_INIT_RANGE, EMBEDDING_INIT_RANGE)
        });
        if let Some(p) = padding_idx {
            table.data_mut()[p * dim..(p + 1) * dim].fill(T::zero());
        }
        let table = ps.add(format!("{name}.table"), table);
        Self { table, padding_idx }
    }

    pub fn forward<T: Element>(&self, g: &mut Graph<'_, T>, ids: &[usize], batch: usize, len: usize) -> Result<Var> {
        let t = g.param(self.table);
        g.embedding(t, ids, batch, len, self.padding_idx)
    }
}

#[derive(Clone, Debug)]
pub struct Conv1d {
    pub kernels: ParamId,
    pub bias: ParamId,
    pub width: usize,
}

impl Conv1d {
    pub fn new<T: Element>(
        ps: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        d_out: usize,
        width: usize,
        rng: &mut Rng,
    ) -> Self {
        let kernels = ps.add(
            format!("{name}.kernels"),
            glorot_uniform(&[d_out, width, d_in], width * d_in, width * d_out, rng),
        );
        let bias = ps.add(format!("{name}.bias"), Tensor::zeros(&[d_out]));
        Self { kernels, bias, width }
    }

    pub fn forward<T: Element>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let (k, b) = (g.param(self.kernels), g.param(self.bias));
        g.conv1d(x, k, b)
    }
}

/// Mask over the output positions of a valid convolution of `width` over
/// an input with the given mask. Position `p` is kept when its window
/// starts inside the real tokens and, for inputs shorter than the kernel,
/// only the first window is kept.
pub fn conv_output_mask(mask: &Mask, width: usize) -> Mask {
    let positions = mask.len() + 1 - width;
    let lengths: Vec<usize> = (0..mask.batch())
        .map(|b| mask.count(b).max(width) + 1 - width)
        .collect();
    Mask::from_lengths(&lengths, positions)
}

/// Query/key/value/output projections around [`Graph::attention`].
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new<T: Element>(ps: &mut ParamStore<T>, name: &str, dim: usize, heads: usize, rng: &mut Rng) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(crate::TensorError::Config(format!(
                "model width {dim} is not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            query: Linear::new(ps, &format!("{name}.query"), dim, dim, rng),
            key: Linear::new(ps, &format!("{name}.key"), dim, dim, rng),
            value: Linear::new(ps, &format!("{name}.value"), dim, dim, rng),
            output: Linear::new(ps, &format!("{name}.output"), dim, dim, rng),
            heads,
        })
    }

    /// Attends from `queries` (`batch×q_len×dim`) over `context`
    /// (`batch×k_len×dim`), ignoring context positions where `mask` is off.
    pub fn forward<T: Element>(&self, g: &mut Graph<'_, T>, queries: Var, context: Var, mask: &Mask) -> Result<Var> {
        let q = self.query.forward(g, queries)?;
        let k = self.key.forward(g, context)?;
        let v = self.value.forward(g, context)?;
        let heads = g.attention(q, k, v, mask, self.heads)?;
        self.output.forward(g, heads)
    }

    pub fn self_attention<T: Element>(&self, g: &mut Graph<'_, T>, x: Var, mask: &Mask) -> Result<Var> {
        self.forward(g, x, x, mask)
    }
}

/// Fixed sinusoidal position table: `pe[p, 2i] = sin(p / 10000^(2i/d))`,
/// `pe[p, 2i+1] = cos(p / 10000^(2i/d))`.
pub fn sinusoidal_positions<T: Element>(len: usize, dim: usize) -> Tensor<T> {
    Tensor::from_fn(&[len, dim], |i| {
        let (pos, j) = (i / dim, i % dim);
        let pair = (j / 2) * 2;
        let angle = pos as f64 / 10000f64.powf(pair as f64 / dim as f64);
        T::of(if j % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}
