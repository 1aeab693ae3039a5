use super::elementwise::softmax_row;
use super::expect_rank;
use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::graph::{Backward, BackwardCtx, GradSink, Graph, Var};
use crate::linalg::{gemm, MatMut, MatRef};
use crate::tensor::{Mask, Tensor};

#[derive(Clone, Copy)]
struct AttnDims {
    batch: usize,
    q_len: usize,
    k_len: usize,
    dim: usize,
    heads: usize,
}

impl AttnDims {
    fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    /// Head `h` of batch row `b` of a `batch×len×dim` buffer.
    fn head<'s, T>(&self, data: &'s [T], len: usize, b: usize, h: usize) -> MatRef<'s, T> {
        MatRef {
            data,
            offset: b * len * self.dim + h * self.head_dim(),
            rows: len,
            cols: self.head_dim(),
            row_stride: self.dim,
            col_stride: 1,
        }
    }

    fn head_mut<'s, T>(&self, data: &'s mut [T], len: usize, b: usize, h: usize) -> MatMut<'s, T> {
        MatMut {
            offset: b * len * self.dim + h * self.head_dim(),
            rows: len,
            cols: self.head_dim(),
            row_stride: self.dim,
            col_stride: 1,
            data,
        }
    }

    fn block(&self) -> usize {
        self.q_len * self.k_len
    }

    fn block_offset(&self, b: usize, h: usize) -> usize {
        (b * self.heads + h) * self.block()
    }
}

struct AttentionOp<T> {
    dims: AttnDims,
    scale: T,
    probs: Vec<T>,
}

impl<T: Element> Backward<T> for AttentionOp<T> {
    fn name(&self) -> &'static str {
        "attention"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>, grad_out: &[T], sink: &mut GradSink<'_, T>) {
        let dims = self.dims;
        let (lq, lk) = (dims.q_len, dims.k_len);
        let (q, k, v) = (ctx.input(0).data(), ctx.input(1).data(), ctx.input(2).data());
        let need_scores = sink.wants(0) || sink.wants(1);

        // dS = P ⊙ (dP − rowsum(dP ⊙ P)), dP = dO·Vᵀ
        let mut dscores = vec![T::zero(); if need_scores { self.probs.len() } else { 0 }];
        let mut dp = vec![T::zero(); dims.block()];
        let mut gv = sink.get(2);
        for b in 0..dims.batch {
            for h in 0..dims.heads {
                let off = dims.block_offset(b, h);
                let probs = MatRef::dense(&self.probs, off, lq, lk);
                let d_o = dims.head(grad_out, lq, b, h);
                if let Some(gv) = gv.as_deref_mut() {
                    gemm(T::one(), probs.t(), d_o, T::one(), dims.head_mut(gv, lk, b, h));
                }
                if need_scores {
                    gemm(
                        T::one(),
                        d_o,
                        dims.head(v, lk, b, h).t(),
                        T::zero(),
                        MatMut::dense(&mut dp, 0, lq, lk),
                    );
                    for i in 0..lq {
                        let pr = &self.probs[off + i * lk..off + (i + 1) * lk];
                        let dr = &dp[i * lk..(i + 1) * lk];
                        let dot: T = pr.iter().zip(dr).map(|(&a, &b)| a * b).sum();
                        let ds = &mut dscores[off + i * lk..off + (i + 1) * lk];
                        for j in 0..lk {
                            ds[j] = pr[j] * (dr[j] - dot);
                        }
                    }
                }
            }
        }
        if let Some(gq) = sink.get(0) {
            for b in 0..dims.batch {
                for h in 0..dims.heads {
                    let ds = MatRef::dense(&dscores, dims.block_offset(b, h), lq, lk);
                    gemm(self.scale, ds, dims.head(k, lk, b, h), T::one(), dims.head_mut(gq, lq, b, h));
                }
            }
        }
        if let Some(gk) = sink.get(1) {
            for b in 0..dims.batch {
                for h in 0..dims.heads {
                    let ds = MatRef::dense(&dscores, dims.block_offset(b, h), lq, lk);
                    gemm(self.scale, ds.t(), dims.head(q, lq, b, h), T::one(), dims.head_mut(gk, lk, b, h));
                }
            }
        }
    }
}

impl<'a, T: Element> Graph<'a, T> {
    /// Multi-head scaled dot-product attention on already projected inputs.
    ///
    /// `q` is `batch×q_len×dim`; `k` and `v` are `batch×k_len×dim`. The
    /// feature axis is split into `heads` equal slices, scores are scaled by
    /// `1/√(dim/heads)`, and masked-out keys get a score of −∞ before the
    /// softmax. Head outputs are written back side by side.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, key_mask: &Mask, heads: usize) -> Result<Var> {
        let (qs, ks, vs) = (self.shape(q).to_vec(), self.shape(k).to_vec(), self.shape(v).to_vec());
        expect_rank("attention", &qs, 3)?;
        expect_rank("attention", &ks, 3)?;
        if ks != vs || qs[0] != ks[0] || qs[2] != ks[2] {
            return Err(TensorError::ShapeMismatch {
                op: "attention",
                lhs: qs,
                rhs: ks,
            });
        }
        if heads == 0 || qs[2] % heads != 0 {
            return Err(TensorError::Config(format!(
                "model width {} is not divisible by {heads} heads",
                qs[2]
            )));
        }
        if key_mask.batch() != ks[0] || key_mask.len() != ks[1] {
            return Err(TensorError::ShapeMismatch {
                op: "attention mask",
                lhs: ks,
                rhs: vec![key_mask.batch(), key_mask.len()],
            });
        }
        if let Some(row) = (0..key_mask.batch()).find(|&b| key_mask.count(b) == 0) {
            return Err(TensorError::EmptyMaskRow { op: "attention", row });
        }
        let dims = AttnDims {
            batch: qs[0],
            q_len: qs[1],
            k_len: ks[1],
            dim: qs[2],
            heads,
        };
        let scale = T::one() / T::of(dims.head_dim() as f64).sqrt();
        let (lq, lk) = (dims.q_len, dims.k_len);
        let (qd, kd, vd) = (self.value(q).data(), self.value(k).data(), self.value(v).data());

        let mut probs = vec![T::zero(); dims.batch * heads * dims.block()];
        let mut scores = vec![T::zero(); dims.block()];
        let mut out = Tensor::zeros(&qs);
        for b in 0..dims.batch {
            let keep = key_mask.row(b);
            for h in 0..heads {
                gemm(
                    scale,
                    dims.head(qd, lq, b, h),
                    dims.head(kd, lk, b, h).t(),
                    T::zero(),
                    MatMut::dense(&mut scores, 0, lq, lk),
                );
                let off = dims.block_offset(b, h);
                for i in 0..lq {
                    let row = &mut scores[i * lk..(i + 1) * lk];
                    for (s, &m) in row.iter_mut().zip(keep) {
                        if !m {
                            *s = T::neg_infinity();
                        }
                    }
                    softmax_row(row, &mut probs[off + i * lk..off + (i + 1) * lk]);
                }
                gemm(
                    T::one(),
                    MatRef::dense(&probs, off, lq, lk),
                    dims.head(vd, lk, b, h),
                    T::zero(),
                    dims.head_mut(out.data_mut(), lq, b, h),
                );
            }
        }
        let op = AttentionOp { dims, scale, probs };
        Ok(self.record(out, &[q, k, v], Box::new(op)))
    }
}
