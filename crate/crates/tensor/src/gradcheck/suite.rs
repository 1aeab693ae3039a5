//! Randomized gradient checks for every differentiable graph operation.
//!
//! Each case draws a fresh small shape (all dims ≤ 5), random inputs and a
//! random projection `r`, then checks `sum(op(inputs) ⊙ r)`. Inputs to ops
//! with kinks (relu, max pooling) are drawn away from the kink.

use rand::Rng as _;

use super::{check_gradients, GradCheckReport, DEFAULT_STEP};
use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::rng::{seeded, Rng};
use crate::tensor::{Mask, Tensor};

#[derive(Clone, Debug)]
pub struct OpCheck {
    pub op: &'static str,
    pub cases: usize,
    pub max_rel_error: f64,
    pub worst: GradCheckReport,
}

/// Random input helpers shared with tests.
pub mod random_inputs {
    use super::*;

    pub fn uniform(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    pub fn away_from_zero(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| {
            let m: f64 = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
    }

    /// Pairwise gaps of at least ~0.09, far above the difference step.
    pub fn distinct(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        Tensor::from_fn(shape, |i| order[i] as f64 * 0.1 - 0.5 + rng.random_range(0.0..0.01))
    }

    pub fn mask(rng: &mut Rng, batch: usize, len: usize) -> Mask {
        let lengths: Vec<usize> = (0..batch).map(|_| rng.random_range(1..=len)).collect();
        Mask::from_lengths(&lengths, len)
    }
}

use random_inputs as ri;

fn project(g: &mut Graph<'_, f64>, out: Var, r: &Tensor<f64>) -> Result<Var> {
    let rv = g.constant(r.clone());
    let p = g.mul(out, rv)?;
    Ok(g.sum(p))
}

fn d(rng: &mut Rng, hi: usize) -> usize {
    rng.random_range(1..=hi)
}

type Case = fn(&mut Rng) -> Result<GradCheckReport>;

fn case_matmul(rng: &mut Rng) -> Result<GradCheckReport> {
    let (m, k, n) = (d(rng, 5), d(rng, 5), d(rng, 5));
    let r = ri::uniform(rng, &[m, n]);
    let inputs = [ri::uniform(rng, &[m, k]), ri::uniform(rng, &[k, n])];
    check_gradients(&inputs, |g, v| {
        let y = g.matmul(v[0], v[1])?;
        project(g, y, &r)
    }, DEFAULT_STEP)
}

fn case_linear(rng: &mut Rng) -> Result<GradCheckReport> {
    let (b, l, i, o) = (d(rng, 3), d(rng, 4), d(rng, 5), d(rng, 5));
    let r = ri::uniform(rng, &[b, l, o]);
    let inputs = [ri::uniform(rng, &[b, l, i]), ri::uniform(rng, &[i, o]), ri::uniform(rng, &[o])];
    check_gradients(&inputs, |g, v| {
        let y = g.linear(v[0], v[1], Some(v[2]))?;
        project(g, y, &r)
    }, DEFAULT_STEP)
}

fn case_embedding(rng: &mut Rng) -> Result<GradCheckReport> {
    let (vocab, dim, b, l) = (d(rng, 5), d(rng, 5), d(rng, 3), d(rng, 5));
    let ids: Vec<usize> = (0..b * l).map(|_| rng.random_range(0..vocab)).collect();
    let r = ri::uniform(rng, &[b, l, dim]);
    let inputs = [ri::uniform(rng, &[vocab, dim])];
    check_gradients(&inputs, |g, v| {
        let y = g.embedding(v[0], &ids, b, l, None)?;
        project(g, y, &r)
    }, DEFAULT_STEP)
}

fn case_conv1d(rng: &mut Rng) -> Result<GradCheckReport> {
    let (b, w, d_in, d_out) = (d(rng, 3), d(rng, 4), d(rng, 4), d(rng, 4));
    let l = rng.random_range(w..=5.max(w));
    let r = ri::uniform(rng, &[b, l - w + 1, d_out]);
    let inputs = [
        ri::uniform(rng, &[b, l, d_in]),
        ri::uniform(rng, &[d_out, w, d_in]),
        ri::uniform(rng, &[d_out]),
    ];
    check_gradients(&inputs, |g, v| {
        let y = g.conv1d(v[0], v[1], v[2])?;
        project(g, y, &r)
    }, DEFAULT_STEP)
}

fn case_max_over_sequence(rng: &mut Rng) -> Result<GradCheckReport> {
    let (b, l, dim) = (d(rng, 3), d(rng, 5), d(rng, 5));
    let mask = ri::mask(rng, b, l);
    let r = ri::uniform(rng, &[b, dim]);
    let inputs = [ri::distinct(rng, &[b, l, dim])];
    check_gradients(&inputs, |g, v| {
        let y = g.max_over_sequence(v[0], &mask)?;
        project(g, y, &r)
    }, DEFAULT_STEP)
}

fn case_mean_over_sequence(rng: &mut Rng) -> Result<GradCheckReport> {
    let (b, l, dim) = (d(rng, 3), d(rng, 5), d(rng, 5));
    let mask = ri::mask(rng, b, l);
    let r = ri::uniform(rng, &[b, dim]);
    let inputs = [ri::uniform(rng, &[b, l, dim])];
    check_gradients(&inputs, |g, v| {
        let y = g.mean_over_sequence(v[0], &mask)?;
        project(g, y, &r)
    }, DEFAULT_STEP)
}

fn case_chunk_mean(rng: &mut Rng) -> Result<GradCheckReport> {
    let (b, l, dim, chunk) = (d(rng, 3), d(rng, 5), d(rng, 4), d(rng, 3));
    let mask = ri::mask(rng, b, l);
    let r = ri::uniform(rng, &[b, l.div_ceil(chunk), dim]);
    let inputs = [ri::uniform(rng, &[b, l, dim])];
    check_gradients(&inputs, |g, v| {
        let (y, _) = g.chunk_mean(v[0], &mask, chunk)?;
        project(g, y, &r)
    }, DEFAULT_STEP)
}

fn case_layer_norm(rng: &mut Rng) -> Result<GradCheckReport> {
    let (rows, dim) = (d(rng, 4), rng.random_range(2..=5));
    let r = ri::uniform(rng, &[rows, dim]);
    let inputs = [ri::uniform(rng, &[rows, dim]), ri::uniform(rng, &[dim]), ri::uniform(rng, &[dim])];
    check_gradients(&inputs, |g, v| {
        let y = g.layer_norm(v[0], v[1], v[2], 1e-5)?;
        project(g, y, &r)
    }, DEFAULT_STEP)
}

fn case_relu(rng: &mut Rng) -> Result<GradCheckReport> {
    let shape = [d(rng, 4), d(rng, 5)];
    let r = ri::uniform(rng, &shape);
    let inputs = [ri::away_from_zero(rng, &shape)];
    check_gradients(&inputs, |g, v| {
        let y = g.relu(v[0]);
        project(g, y, &r)
    }, DEFAULT_STEP)
}

fn case_softmax(rng: &mut Rng) -> Result<GradCheckReport> {
    let shape = [d(rng, 4), d(rng, 5)];
    let r = ri::uniform(rng, &shape);
    let inputs = [ri::uniform(rng, &shape)];
    check_gradients(&inputs, |g, v| {
        let y = g.softmax(v[0]);
        project(g, y, &r)
    }, DEFAULT_STEP)
}

fn case_dropout(rng: &mut Rng) -> Result<GradCheckReport> {
    let shape = [d(rng, 4), d(rng, 5)];
    let seed: u64 = rng.random();
    let r = ri::uniform(rng, &shape);
    let inputs = [ri::uniform(rng, &shape)];
    check_gradients(&inputs, |g, v| {
        // same seed on every evaluation, so the mask is fixed
        let mut mask_rng = seeded(seed);
        let y = g.dropout(v[0], 0.4, true, &mut mask_rng)?;
        project(g, y, &r)
    }, DEFAULT_STEP)
}

fn attention_dims(rng: &mut Rng) -> (usize, usize, usize, usize, usize) {
    let heads = d(rng, 2);
    let dim = heads * d(rng, 2);
    (d(rng, 3), d(rng, 4), d(rng, 4), dim, heads)
}

fn case_attention(rng: &mut Rng) -> Result<GradCheckReport> {
    let (b, lq, lk, dim, heads) = attention_dims(rng);
    let mask = ri::mask(rng, b, lk);
    let r = ri::uniform(rng, &[b, lq, dim]);
    let inputs = [
        ri::uniform(rng, &[b, lq, dim]),
        ri::uniform(rng, &[b, lk, dim]),
        ri::uniform(rng, &[b, lk, dim]),
    ];
    check_gradients(&inputs, |g, v| {
        let y = g.attention(v[0], v[1], v[2], &mask, heads)?;
        project(g, y, &r)
    }, DEFAULT_STEP)
}

/// Full multi-head self-attention block: projections, attention core and
/// output projection, differentiated with respect to input and weights.
///
/// The key-projection bias is held constant: it shifts every score in a row
/// equally, so its gradient is identically zero and a finite difference
/// there measures only roundoff. `key_bias_gradient_is_zero` covers it.
fn case_self_attention(rng: &mut Rng) -> Result<GradCheckReport> {
    let (b, l, _, dim, heads) = attention_dims(rng);
    let mask = ri::mask(rng, b, l);
    let r = ri::uniform(rng, &[b, l, dim]);
    let key_bias = ri::uniform(rng, &[dim]);
    let mut inputs = vec![ri::uniform(rng, &[b, l, dim])];
    for i in 0..4 {
        inputs.push(ri::uniform(rng, &[dim, dim]));
        if i != 1 {
            inputs.push(ri::uniform(rng, &[dim]));
        }
    }
    check_gradients(&inputs, |g, v| {
        let kb = g.constant(key_bias.clone());
        let q = g.linear(v[0], v[1], Some(v[2]))?;
        let k = g.linear(v[0], v[3], Some(kb))?;
        let val = g.linear(v[0], v[4], Some(v[5]))?;
        let heads_out = g.attention(q, k, val, &mask, heads)?;
        let y = g.linear(heads_out, v[6], Some(v[7]))?;
        project(g, y, &r)
    }, DEFAULT_STEP)
}

fn case_add_mul(rng: &mut Rng) -> Result<GradCheckReport> {
    let shape = [d(rng, 4), d(rng, 5)];
    let r = ri::uniform(rng, &shape);
    let inputs = [ri::uniform(rng, &shape), ri::uniform(rng, &shape)];
    check_gradients(&inputs, |g, v| {
        let s = g.add(v[0], v[1])?;
        let p = g.mul(s, v[1])?;
        project(g, p, &r)
    }, DEFAULT_STEP)
}

fn case_scale_sum(rng: &mut Rng) -> Result<GradCheckReport> {
    let shape = [d(rng, 4), d(rng, 5)];
    let c: f64 = rng.random_range(-2.0..2.0);
    let inputs = [ri::uniform(rng, &shape)];
    check_gradients(&inputs, |g, v| {
        let s = g.scale(v[0], c);
        let sq = g.mul(s, s)?;
        Ok(g.sum(sq))
    }, DEFAULT_STEP)
}

fn case_concat(rng: &mut Rng) -> Result<GradCheckReport> {
    let (rows, a, b) = (d(rng, 4), d(rng, 3), d(rng, 3));
    let r = ri::uniform(rng, &[rows, a + b + a]);
    let inputs = [ri::uniform(rng, &[rows, a]), ri::uniform(rng, &[rows, b])];
    check_gradients(&inputs, |g, v| {
        let y = g.concat(&[v[0], v[1], v[0]])?;
        project(g, y, &r)
    }, DEFAULT_STEP)
}

fn case_reshape_expand(rng: &mut Rng) -> Result<GradCheckReport> {
    let (n, dim, b) = (d(rng, 4), d(rng, 4), d(rng, 3));
    let r = ri::uniform(rng, &[b, n * dim]);
    let inputs = [ri::uniform(rng, &[n, dim])];
    check_gradients(&inputs, |g, v| {
        let e = g.expand_batch(v[0], b);
        let y = g.reshape(e, &[b, n * dim])?;
        project(g, y, &r)
    }, DEFAULT_STEP)
}

const CASES: &[(&str, Case)] = &[
    ("matmul", case_matmul),
    ("linear", case_linear),
    ("embedding", case_embedding),
    ("conv1d", case_conv1d),
    ("max_over_sequence", case_max_over_sequence),
    ("mean_over_sequence", case_mean_over_sequence),
    ("chunk_mean", case_chunk_mean),
    ("layer_norm", case_layer_norm),
    ("relu", case_relu),
    ("softmax", case_softmax),
    ("dropout", case_dropout),
    ("attention", case_attention),
    ("multi_head_self_attention", case_self_attention),
    ("add+mul", case_add_mul),
    ("scale+sum", case_scale_sum),
    ("concat", case_concat),
    ("reshape+expand_batch", case_reshape_expand),
];

/// Runs `cases_per_op` random cases for every operation; returns the worst
/// case per operation.
pub fn op_suite(cases_per_op: usize, seed: u64) -> Result<Vec<OpCheck>> {
    let mut rng = seeded(seed);
    let mut out = Vec::with_capacity(CASES.len());
    for &(op, case) in CASES {
        let mut worst = GradCheckReport::default();
        let mut checked = 0;
        for _ in 0..cases_per_op {
            let report = case(&mut rng)?;
            checked += report.checked;
            if report.max_rel_error >= worst.max_rel_error {
                worst = report;
            }
        }
        worst.checked = checked;
        out.push(OpCheck {
            op,
            cases: cases_per_op,
            max_rel_error: worst.max_rel_error,
            worst,
        });
    }
    Ok(out)
}
