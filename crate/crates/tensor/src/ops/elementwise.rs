use rand::Rng as _;

use super::same_shape;
use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::graph::{Backward, BackwardCtx, GradSink, Graph, Var};
use crate::rng::Rng;
use crate::tensor::Tensor;

struct AddOp;

impl<T: Element> Backward<T> for AddOp {
    fn name(&self) -> &'static str {
        "add"
    }

    fn backward(&self, _ctx: &BackwardCtx<'_, T>, grad_out: &[T], sink: &mut GradSink<'_, T>) {
        for k in 0..2 {
            if let Some(g) = sink.get(k) {
                g.iter_mut().zip(grad_out).for_each(|(g, &d)| *g += d);
            }
        }
    }
}

struct MulOp;

impl<T: Element> Backward<T> for MulOp {
    fn name(&self) -> &'static str {
        "mul"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>, grad_out: &[T], sink: &mut GradSink<'_, T>) {
        let (a, b) = (ctx.input(0).data(), ctx.input(1).data());
        if let Some(g) = sink.get(0) {
            for i in 0..g.len() {
                g[i] += grad_out[i] * b[i];
            }
        }
        if let Some(g) = sink.get(1) {
            for i in 0..g.len() {
                g[i] += grad_out[i] * a[i];
            }
        }
    }
}

struct ReluOp;

impl<T: Element> Backward<T> for ReluOp {
    fn name(&self) -> &'static str {
        "relu"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>, grad_out: &[T], sink: &mut GradSink<'_, T>) {
        let y = ctx.output().data();
        if let Some(g) = sink.get(0) {
            for i in 0..g.len() {
                if y[i] > T::zero() {
                    g[i] += grad_out[i];
                }
            }
        }
    }
}

struct SumOp;

impl<T: Element> Backward<T> for SumOp {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn backward(&self, _ctx: &BackwardCtx<'_, T>, grad_out: &[T], sink: &mut GradSink<'_, T>) {
        if let Some(g) = sink.get(0) {
            g.iter_mut().for_each(|g| *g += grad_out[0]);
        }
    }
}

struct ScaleOp<T>(T);

impl<T: Element> Backward<T> for ScaleOp<T> {
    fn name(&self) -> &'static str {
        "scale"
    }

    fn backward(&self, _ctx: &BackwardCtx<'_, T>, grad_out: &[T], sink: &mut GradSink<'_, T>) {
        if let Some(g) = sink.get(0) {
            g.iter_mut().zip(grad_out).for_each(|(g, &d)| *g += d * self.0);
        }
    }
}

struct SoftmaxOp;

impl<T: Element> Backward<T> for SoftmaxOp {
    fn name(&self) -> &'static str {
        "softmax"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>, grad_out: &[T], sink: &mut GradSink<'_, T>) {
        let y = ctx.output();
        let d = y.last_dim();
        let y = y.data();
        if let Some(g) = sink.get(0) {
            for ((gr, yr), dr) in g.chunks_mut(d).zip(y.chunks(d)).zip(grad_out.chunks(d)) {
                let dot: T = yr.iter().zip(dr).map(|(&a, &b)| a * b).sum();
                for j in 0..d {
                    gr[j] += yr[j] * (dr[j] - dot);
                }
            }
        }
    }
}

struct DropoutOp<T> {
    scale_mask: Vec<T>,
}

impl<T: Element> Backward<T> for DropoutOp<T> {
    fn name(&self) -> &'static str {
        "dropout"
    }

    fn backward(&self, _ctx: &BackwardCtx<'_, T>, grad_out: &[T], sink: &mut GradSink<'_, T>) {
        if let Some(g) = sink.get(0) {
            for i in 0..g.len() {
                g[i] += grad_out[i] * self.scale_mask[i];
            }
        }
    }
}

/// Numerically stable softmax of one row, written into `out`.
pub(crate) fn softmax_row<T: Element>(row: &[T], out: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for (o, &x) in out.iter_mut().zip(row) {
        *o = (x - max).exp();
        total += *o;
    }
    let inv = T::one() / total;
    out.iter_mut().for_each(|o| *o *= inv);
}

impl<'a, T: Element> Graph<'a, T> {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", self.shape(a), self.shape(b))?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p + q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.record(out, &[a, b], Box::new(AddOp)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("mul", self.shape(a), self.shape(b))?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p * q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.record(out, &[a, b], Box::new(MulOp)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let out = Tensor::from_fn(v.shape(), |i| v.data()[i].max(T::zero()));
        self.record(out, &[x], Box::new(ReluOp))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let total: T = self.value(x).data().iter().copied().sum();
        self.record(Tensor::scalar(total), &[x], Box::new(SumOp))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let v = self.value(x);
        let out = Tensor::from_fn(v.shape(), |i| v.data()[i] * factor);
        self.record(out, &[x], Box::new(ScaleOp(factor)))
    }

    /// Softmax over the last axis. Each row is shifted by its max first.
    pub fn softmax(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let d = v.last_dim();
        let mut out = Tensor::zeros(v.shape());
        for (o, r) in out.data_mut().chunks_mut(d).zip(v.data().chunks(d)) {
            softmax_row(r, o);
        }
        self.record(out, &[x], Box::new(SoftmaxOp))
    }

    /// Inverted dropout. In eval mode (or with `p == 0`) this is the
    /// identity and returns `x` itself; in train mode each element draws one
    /// uniform from `rng`, in row-major order.
    pub fn dropout(&mut self, x: Var, p: f64, train: bool, rng: &mut Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::Config(format!("dropout probability {p} outside [0, 1)")));
        }
        if !train || p == 0.0 {
            return Ok(x);
        }
        let keep_scale = T::of(1.0 / (1.0 - p));
        let v = self.value(x);
        let scale_mask: Vec<T> = (0..v.len())
            .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep_scale })
            .collect();
        let data = v.data().iter().zip(&scale_mask).map(|(&a, &m)| a * m).collect();
        let out = Tensor::new(v.shape().to_vec(), data)?;
        Ok(self.record(out, &[x], Box::new(DropoutOp { scale_mask })))
    }
}
