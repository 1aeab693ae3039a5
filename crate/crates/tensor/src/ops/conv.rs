use super::expect_rank;
use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::graph::{Backward, BackwardCtx, GradSink, Graph, Var};
use crate::linalg::{gemm, MatMut, MatRef};
use crate::tensor::Tensor;

/// Geometry shared by the forward and backward passes.
#[derive(Clone, Copy)]
struct ConvDims {
    batch: usize,
    len: usize,
    d_in: usize,
    d_out: usize,
    width: usize,
}

impl ConvDims {
    fn positions(&self) -> usize {
        self.len - self.width + 1
    }

    fn patch(&self) -> usize {
        self.width * self.d_in
    }

    /// Sliding windows of batch row `b` as a `positions × (width·d_in)`
    /// matrix. Consecutive windows overlap, so the row stride is `d_in`.
    fn windows<'s, T>(&self, x: &'s [T], b: usize) -> MatRef<'s, T> {
        MatRef {
            data: x,
            offset: b * self.len * self.d_in,
            rows: self.positions(),
            cols: self.patch(),
            row_stride: self.d_in,
            col_stride: 1,
        }
    }
}

struct Conv1dOp {
    dims: ConvDims,
}

impl<T: Element> Backward<T> for Conv1dOp {
    fn name(&self) -> &'static str {
        "conv1d"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>, grad_out: &[T], sink: &mut GradSink<'_, T>) {
        let dims = self.dims;
        let (p, patch, d_out) = (dims.positions(), dims.patch(), dims.d_out);
        let x = ctx.input(0).data();
        let kernels = MatRef::dense(ctx.input(1).data(), 0, d_out, patch);

        if let Some(gx) = sink.get(0) {
            let mut tmp = vec![T::zero(); p * patch];
            for b in 0..dims.batch {
                let dy = MatRef::dense(grad_out, b * p * d_out, p, d_out);
                gemm(T::one(), dy, kernels, T::zero(), MatMut::dense(&mut tmp, 0, p, patch));
                let base = b * dims.len * dims.d_in;
                for pos in 0..p {
                    let dst = &mut gx[base + pos * dims.d_in..base + pos * dims.d_in + patch];
                    dst.iter_mut()
                        .zip(&tmp[pos * patch..(pos + 1) * patch])
                        .for_each(|(g, &t)| *g += t);
                }
            }
        }
        if let Some(gk) = sink.get(1) {
            for b in 0..dims.batch {
                let dy = MatRef::dense(grad_out, b * p * d_out, p, d_out);
                gemm(T::one(), dy.t(), dims.windows(x, b), T::one(), MatMut::dense(gk, 0, d_out, patch));
            }
        }
        if let Some(gb) = sink.get(2) {
            for row in grad_out.chunks(d_out) {
                gb.iter_mut().zip(row).for_each(|(g, &d)| *g += d);
            }
        }
    }
}

impl<'a, T: Element> Graph<'a, T> {
    /// Valid (unpadded) cross-correlation along the sequence axis.
    ///
    /// `x` is `batch×len×d_in`, `kernels` is `d_out×width×d_in` and `bias`
    /// is `d_out`; the output is `batch×(len−width+1)×d_out` with
    /// `out[b,p,o] = bias[o] + Σ_{j,c} x[b,p+j,c]·kernels[o,j,c]`.
    pub fn conv1d(&mut self, x: Var, kernels: Var, bias: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ks = self.shape(kernels).to_vec();
        expect_rank("conv1d", &xs, 3)?;
        expect_rank("conv1d", &ks, 3)?;
        if ks[2] != xs[2] || self.shape(bias) != [ks[0]] {
            return Err(TensorError::ShapeMismatch {
                op: "conv1d",
                lhs: xs,
                rhs: ks,
            });
        }
        let dims = ConvDims {
            batch: xs[0],
            len: xs[1],
            d_in: xs[2],
            d_out: ks[0],
            width: ks[1],
        };
        if dims.width == 0 || dims.len < dims.width {
            return Err(TensorError::InvalidShape {
                op: "conv1d",
                msg: format!("sequence length {} shorter than kernel width {}", dims.len, dims.width),
            });
        }
        let (p, patch, d_out) = (dims.positions(), dims.patch(), dims.d_out);
        let mut out = Tensor::zeros(&[dims.batch, p, d_out]);
        let bias_v = self.value(bias).data();
        for row in out.data_mut().chunks_mut(d_out) {
            row.copy_from_slice(bias_v);
        }
        let xv = self.value(x).data();
        let kt = MatRef::dense(self.value(kernels).data(), 0, d_out, patch).t();
        for b in 0..dims.batch {
            gemm(
                T::one(),
                dims.windows(xv, b),
                kt,
                T::one(),
                MatMut::dense(out.data_mut(), b * p * d_out, p, d_out),
            );
        }
        Ok(self.record(out, &[x, kernels, bias], Box::new(Conv1dOp { dims })))
    }
}
