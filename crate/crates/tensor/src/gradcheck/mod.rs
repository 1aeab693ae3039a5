//! Central finite-difference gradient checking.
//!
//! The numeric side only ever evaluates forward values, so it is
//! independent of every backward rule it checks.

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Magnitudes below this are compared absolutely rather than relatively.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: Option<Mismatch>,
}

impl GradCheckReport {
    fn observe(&mut self, input: usize, index: usize, analytic: f64, numeric: f64) {
        self.checked += 1;
        let err = relative_error(analytic, numeric);
        if err > self.max_rel_error || self.worst.is_none() {
            self.max_rel_error = err.max(self.max_rel_error);
            self.worst = Some(Mismatch {
                input,
                index,
                analytic,
                numeric,
            });
        }
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_FLOOR)
}

fn eval_scalar<T: Element, F>(f: &F, inputs: &[Tensor<T>]) -> Result<f64>
where
    F: Fn(&mut Graph<'_, T>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let v = g.value(out);
    if !v.is_scalar() {
        return Err(TensorError::NonScalarLoss(v.shape().to_vec()));
    }
    Ok(v.item().as_f64())
}

fn analytic<T: Element, F>(f: &F, inputs: &[Tensor<T>]) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&mut Graph<'_, T>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    g.backward(out, None)?;
    Ok(vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| match g.grad(v) {
            Some(gr) => gr.iter().map(|x| x.as_f64()).collect(),
            None => vec![0.0; t.len()],
        })
        .collect())
}

fn numeric<F>(f: &F, inputs: &[Tensor<f64>], step: f64) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&mut Graph<'_, f64>, &[Var]) -> Result<Var>,
{
    let mut work = inputs.to_vec();
    let mut grads = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut gi = Vec::with_capacity(inputs[i].len());
        for j in 0..inputs[i].len() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + step;
            let plus = eval_scalar(f, &work)?;
            work[i].data_mut()[j] = orig - step;
            let minus = eval_scalar(f, &work)?;
            work[i].data_mut()[j] = orig;
            gi.push((plus - minus) / (2.0 * step));
        }
        grads.push(gi);
    }
    Ok(grads)
}

/// Compares backward gradients of the scalar `f(inputs)` with central
/// differences, all in 64-bit arithmetic.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], f: F, step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_, f64>, &[Var]) -> Result<Var>,
{
    let a = analytic(&f, inputs)?;
    let n = numeric(&f, inputs, step)?;
    let mut report = GradCheckReport::default();
    for (i, (ai, ni)) in a.iter().zip(&n).enumerate() {
        for (j, (&x, &y)) in ai.iter().zip(ni).enumerate() {
            report.observe(i, j, x, y);
        }
    }
    Ok(report)
}

/// Checks 32-bit backward gradients against 64-bit central differences of
/// the same function. `f32_fn` and `f64_fn` must describe the same
/// computation.
pub fn check_gradients_f32<F, G>(inputs: &[Tensor<f64>], f32_fn: F, f64_fn: G, step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_, f32>, &[Var]) -> Result<Var>,
    G: Fn(&mut Graph<'_, f64>, &[Var]) -> Result<Var>,
{
    let narrow: Vec<Tensor<f32>> = inputs.iter().map(|t| t.cast()).collect();
    // Differences are taken around the rounded inputs the f32 pass sees.
    let widened: Vec<Tensor<f64>> = narrow.iter().map(|t| t.cast()).collect();
    let a = analytic(&f32_fn, &narrow)?;
    let n = numeric(&f64_fn, &widened, step)?;
    let mut report = GradCheckReport::default();
    for (i, (ai, ni)) in a.iter().zip(&n).enumerate() {
        for (j, (&x, &y)) in ai.iter().zip(ni).enumerate() {
            report.observe(i, j, x, y);
        }
    }
    Ok(report)
}

mod suite;

pub use suite::{op_suite, random_inputs, OpCheck};
