use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::graph::{Backward, BackwardCtx, GradSink, Graph, Var};
use crate::tensor::Tensor;

struct LayerNormOp<T> {
    normalized: Vec<T>,
    inv_std: Vec<T>,
    dim: usize,
}

impl<T: Element> Backward<T> for LayerNormOp<T> {
    fn name(&self) -> &'static str {
        "layer_norm"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>, grad_out: &[T], sink: &mut GradSink<'_, T>) {
        let d = self.dim;
        let gamma = ctx.input(1).data();
        if let Some(gx) = sink.get(0) {
            let inv_d = T::one() / T::of(d as f64);
            let mut dxhat = vec![T::zero(); d];
            for (r, (gr, dy)) in gx.chunks_mut(d).zip(grad_out.chunks(d)).enumerate() {
                let xhat = &self.normalized[r * d..(r + 1) * d];
                let mut mean_dxhat = T::zero();
                let mut mean_dxhat_xhat = T::zero();
                for j in 0..d {
                    dxhat[j] = dy[j] * gamma[j];
                    mean_dxhat += dxhat[j];
                    mean_dxhat_xhat += dxhat[j] * xhat[j];
                }
                mean_dxhat *= inv_d;
                mean_dxhat_xhat *= inv_d;
                let s = self.inv_std[r];
                for j in 0..d {
                    gr[j] += s * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
                }
            }
        }
        if let Some(gg) = sink.get(1) {
            for (dy, xhat) in grad_out.chunks(d).zip(self.normalized.chunks(d)) {
                for j in 0..d {
                    gg[j] += dy[j] * xhat[j];
                }
            }
        }
        if let Some(gb) = sink.get(2) {
            for dy in grad_out.chunks(d) {
                gb.iter_mut().zip(dy).for_each(|(g, &v)| *g += v);
            }
        }
    }
}

impl<'a, T: Element> Graph<'a, T> {
    /// Standardizes over the last axis with the population variance, then
    /// applies `gamma` and `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let v = self.value(x);
        let d = v.last_dim();
        if d == 0 || v.ndim() == 0 || self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(TensorError::ShapeMismatch {
                op: "layer_norm",
                lhs: v.shape().to_vec(),
                rhs: self.shape(gamma).to_vec(),
            });
        }
        let (g, bta) = (self.value(gamma).data(), self.value(beta).data());
        let rows = v.rows();
        let inv_d = T::one() / T::of(d as f64);
        let eps = T::of(eps);
        let mut normalized = vec![T::zero(); v.len()];
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = Tensor::zeros(v.shape());
        for (r, (row, o)) in v.data().chunks(d).zip(out.data_mut().chunks_mut(d)).enumerate() {
            let mean = row.iter().copied().sum::<T>() * inv_d;
            let var = row.iter().map(|&a| (a - mean) * (a - mean)).sum::<T>() * inv_d;
            let s = T::one() / (var + eps).sqrt();
            inv_std.push(s);
            let xh = &mut normalized[r * d..(r + 1) * d];
            for j in 0..d {
                xh[j] = (row[j] - mean) * s;
                o[j] = xh[j] * g[j] + bta[j];
            }
        }
        let op = LayerNormOp {
            normalized,
            inv_std,
            dim: d,
        };
        Ok(self.record(out, &[x, gamma, beta], Box::new(op)))
    }
}
