use super::expect_rank;
use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::graph::{Backward, BackwardCtx, GradSink, Graph, Var};
use crate::linalg::{gemm, MatMut, MatRef};
use crate::tensor::Tensor;

struct MatmulOp {
    m: usize,
    k: usize,
    n: usize,
}

impl<T: Element> Backward<T> for MatmulOp {
    fn name(&self) -> &'static str {
        "matmul"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>, grad_out: &[T], sink: &mut GradSink<'_, T>) {
        let (m, k, n) = (self.m, self.k, self.n);
        let dc = MatRef::dense(grad_out, 0, m, n);
        if let Some(ga) = sink.get(0) {
            let b = MatRef::dense(ctx.input(1).data(), 0, k, n);
            gemm(T::one(), dc, b.t(), T::one(), MatMut::dense(ga, 0, m, k));
        }
        if let Some(gb) = sink.get(1) {
            let a = MatRef::dense(ctx.input(0).data(), 0, m, k);
            gemm(T::one(), a.t(), dc, T::one(), MatMut::dense(gb, 0, k, n));
        }
    }
}

/// `y = x·W + b` with `x` flattened to rows over its last axis.
struct LinearOp {
    rows: usize,
    fan_in: usize,
    fan_out: usize,
    has_bias: bool,
}

impl<T: Element> Backward<T> for LinearOp {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>, grad_out: &[T], sink: &mut GradSink<'_, T>) {
        let (r, i, o) = (self.rows, self.fan_in, self.fan_out);
        let dy = MatRef::dense(grad_out, 0, r, o);
        if let Some(gx) = sink.get(0) {
            let w = MatRef::dense(ctx.input(1).data(), 0, i, o);
            gemm(T::one(), dy, w.t(), T::one(), MatMut::dense(gx, 0, r, i));
        }
        if let Some(gw) = sink.get(1) {
            let x = MatRef::dense(ctx.input(0).data(), 0, r, i);
            gemm(T::one(), x.t(), dy, T::one(), MatMut::dense(gw, 0, i, o));
        }
        if self.has_bias {
            if let Some(gb) = sink.get(2) {
                for row in grad_out.chunks(o) {
                    gb.iter_mut().zip(row).for_each(|(g, &d)| *g += d);
                }
            }
        }
    }
}

impl<'a, T: Element> Graph<'a, T> {
    /// Matrix product of an `m×k` and a `k×n` tensor.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = Tensor::zeros(&[m, n]);
        gemm(
            T::one(),
            MatRef::dense(self.value(a).data(), 0, m, k),
            MatRef::dense(self.value(b).data(), 0, k, n),
            T::zero(),
            MatMut::dense(out.data_mut(), 0, m, n),
        );
        Ok(self.record(out, &[a, b], Box::new(MatmulOp { m, k, n })))
    }

    /// Affine map over the last axis: `x[..., in]·w[in, out] + b[out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        expect_rank("linear", &ws, 2)?;
        let fan_in = *xs.last().unwrap_or(&0);
        if xs.is_empty() || fan_in != ws[0] {
            return Err(TensorError::ShapeMismatch {
                op: "linear",
                lhs: xs,
                rhs: ws,
            });
        }
        let fan_out = ws[1];
        if let Some(b) = b {
            if self.shape(b) != [fan_out] {
                return Err(TensorError::ShapeMismatch {
                    op: "linear bias",
                    lhs: vec![fan_out],
                    rhs: self.shape(b).to_vec(),
                });
            }
        }
        let rows = self.value(x).rows();
        let mut out_shape = xs.clone();
        *out_shape.last_mut().expect("rank >= 1") = fan_out;
        let mut out = Tensor::zeros(&out_shape);
        if let Some(b) = b {
            let bias = self.value(b).data();
            for row in out.data_mut().chunks_mut(fan_out) {
                row.copy_from_slice(bias);
            }
        }
        gemm(
            T::one(),
            MatRef::dense(self.value(x).data(), 0, rows, fan_in),
            MatRef::dense(self.value(w).data(), 0, fan_in, fan_out),
            T::one(),
            MatMut::dense(out.data_mut(), 0, rows, fan_out),
        );
        let op = LinearOp {
            rows,
            fan_in,
            fan_out,
            has_bias: b.is_some(),
        };
        let inputs: Vec<Var> = match b {
            Some(b) => vec![x, w, b],
            None => vec![x, w],
        };
        Ok(self.record(out, &inputs, Box::new(op)))
    }
}
