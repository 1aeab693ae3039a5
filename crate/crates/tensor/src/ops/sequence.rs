use super::expect_rank;
use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::graph::{Backward, BackwardCtx, GradSink, Graph, Var};
use crate::tensor::{Mask, Tensor};

fn check_mask(op: &'static str, shape: &[usize], mask: &Mask) -> Result<()> {
    expect_rank(op, shape, 3)?;
    if mask.batch() != shape[0] || mask.len() != shape[1] {
        return Err(TensorError::ShapeMismatch {
            op,
            lhs: shape.to_vec(),
            rhs: vec![mask.batch(), mask.len()],
        });
    }
    for b in 0..mask.batch() {
        if mask.count(b) == 0 {
            return Err(TensorError::EmptyMaskRow { op, row: b });
        }
    }
    Ok(())
}

struct EmbeddingOp {
    ids: Vec<usize>,
    dim: usize,
    padding_idx: Option<usize>,
}

impl<T: Element> Backward<T> for EmbeddingOp {
    fn name(&self) -> &'static str {
        "embedding"
    }

    fn backward(&self, _ctx: &BackwardCtx<'_, T>, grad_out: &[T], sink: &mut GradSink<'_, T>) {
        let d = self.dim;
        if let Some(g) = sink.get(0) {
            for (pos, &id) in self.ids.iter().enumerate() {
                if Some(id) == self.padding_idx {
                    continue;
                }
                let src = &grad_out[pos * d..(pos + 1) * d];
                g[id * d..(id + 1) * d].iter_mut().zip(src).for_each(|(g, &s)| *g += s);
            }
        }
    }
}

struct MaxSeqOp {
    /// Flat index into the input for every output element.
    argmax: Vec<usize>,
}

impl<T: Element> Backward<T> for MaxSeqOp {
    fn name(&self) -> &'static str {
        "max_over_sequence"
    }

    fn backward(&self, _ctx: &BackwardCtx<'_, T>, grad_out: &[T], sink: &mut GradSink<'_, T>) {
        if let Some(g) = sink.get(0) {
            for (&src, &d) in self.argmax.iter().zip(grad_out) {
                g[src] += d;
            }
        }
    }
}

struct MeanSeqOp {
    mask: Mask,
    dim: usize,
}

impl<T: Element> Backward<T> for MeanSeqOp {
    fn name(&self) -> &'static str {
        "mean_over_sequence"
    }

    fn backward(&self, _ctx: &BackwardCtx<'_, T>, grad_out: &[T], sink: &mut GradSink<'_, T>) {
        let (l, d) = (self.mask.len(), self.dim);
        if let Some(g) = sink.get(0) {
            for b in 0..self.mask.batch() {
                let inv = T::one() / T::of(self.mask.count(b) as f64);
                let src = &grad_out[b * d..(b + 1) * d];
                for p in 0..l {
                    if self.mask.get(b, p) {
                        let dst = &mut g[(b * l + p) * d..(b * l + p + 1) * d];
                        dst.iter_mut().zip(src).for_each(|(g, &s)| *g += s * inv);
                    }
                }
            }
        }
    }
}

struct ChunkMeanOp {
    mask: Mask,
    chunk: usize,
    chunks: usize,
    dim: usize,
}

impl<T: Element> Backward<T> for ChunkMeanOp {
    fn name(&self) -> &'static str {
        "chunk_mean"
    }

    fn backward(&self, _ctx: &BackwardCtx<'_, T>, grad_out: &[T], sink: &mut GradSink<'_, T>) {
        let (l, d) = (self.mask.len(), self.dim);
        if let Some(g) = sink.get(0) {
            for b in 0..self.mask.batch() {
                for c in 0..self.chunks {
                    let span = c * self.chunk..((c + 1) * self.chunk).min(l);
                    let n = span.clone().filter(|&p| self.mask.get(b, p)).count();
                    if n == 0 {
                        continue;
                    }
                    let inv = T::one() / T::of(n as f64);
                    let src = &grad_out[(b * self.chunks + c) * d..(b * self.chunks + c + 1) * d];
                    for p in span {
                        if self.mask.get(b, p) {
                            let dst = &mut g[(b * l + p) * d..(b * l + p + 1) * d];
                            dst.iter_mut().zip(src).for_each(|(g, &s)| *g += s * inv);
                        }
                    }
                }
            }
        }
    }
}

struct ConcatOp {
    widths: Vec<usize>,
}

impl<T: Element> Backward<T> for ConcatOp {
    fn name(&self) -> &'static str {
        "concat"
    }

    fn backward(&self, _ctx: &BackwardCtx<'_, T>, grad_out: &[T], sink: &mut GradSink<'_, T>) {
        let total: usize = self.widths.iter().sum();
        let mut start = 0;
        for (k, &w) in self.widths.iter().enumerate() {
            if let Some(g) = sink.get(k) {
                for (dst, src) in g.chunks_mut(w).zip(grad_out.chunks(total)) {
                    dst.iter_mut().zip(&src[start..start + w]).for_each(|(g, &s)| *g += s);
                }
            }
            start += w;
        }
    }
}

struct ReshapeOp;

impl<T: Element> Backward<T> for ReshapeOp {
    fn name(&self) -> &'static str {
        "reshape"
    }

    fn backward(&self, _ctx: &BackwardCtx<'_, T>, grad_out: &[T], sink: &mut GradSink<'_, T>) {
        if let Some(g) = sink.get(0) {
            g.iter_mut().zip(grad_out).for_each(|(g, &s)| *g += s);
        }
    }
}

struct ExpandOp;

impl<T: Element> Backward<T> for ExpandOp {
    fn name(&self) -> &'static str {
        "expand_batch"
    }

    fn backward(&self, _ctx: &BackwardCtx<'_, T>, grad_out: &[T], sink: &mut GradSink<'_, T>) {
        if let Some(g) = sink.get(0) {
            let n = g.len();
            for block in grad_out.chunks(n) {
                g.iter_mut().zip(block).for_each(|(g, &s)| *g += s);
            }
        }
    }
}

impl<'a, T: Element> Graph<'a, T> {
    /// Looks up rows of a `V×d` table for a `batch×len` id grid. Gradients
    /// scatter additively into rows; the `padding_idx` row, when given,
    /// never receives a gradient.
    pub fn embedding(
        &mut self,
        table: Var,
        ids: &[usize],
        batch: usize,
        len: usize,
        padding_idx: Option<usize>,
    ) -> Result<Var> {
        let ts = self.shape(table).to_vec();
        expect_rank("embedding", &ts, 2)?;
        if ids.len() != batch * len {
            return Err(TensorError::InvalidShape {
                op: "embedding",
                msg: format!("{} ids for a {batch}x{len} grid", ids.len()),
            });
        }
        let (vocab, dim) = (ts[0], ts[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
            return Err(TensorError::IndexOutOfRange {
                op: "embedding",
                index: bad,
                size: vocab,
            });
        }
        let src = self.value(table).data();
        let mut data = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            data.extend_from_slice(&src[id * dim..(id + 1) * dim]);
        }
        let out = Tensor::new(vec![batch, len, dim], data)?;
        let op = EmbeddingOp {
            ids: ids.to_vec(),
            dim,
            padding_idx,
        };
        Ok(self.record(out, &[table], Box::new(op)))
    }

    /// Per-feature max over unmasked positions of a `batch×len×d` tensor.
    /// The gradient goes to the first position attaining the max.
    pub fn max_over_sequence(&mut self, x: Var, mask: &Mask) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        check_mask("max_over_sequence", &shape, mask)?;
        let (bsz, l, d) = (shape[0], shape[1], shape[2]);
        let src = self.value(x).data();
        let mut out = vec![T::neg_infinity(); bsz * d];
        let mut argmax = vec![0usize; bsz * d];
        for b in 0..bsz {
            for p in 0..l {
                if !mask.get(b, p) {
                    continue;
                }
                let row = &src[(b * l + p) * d..(b * l + p + 1) * d];
                for j in 0..d {
                    if row[j] > out[b * d + j] {
                        out[b * d + j] = row[j];
                        argmax[b * d + j] = (b * l + p) * d + j;
                    }
                }
            }
        }
        let out = Tensor::new(vec![bsz, d], out)?;
        Ok(self.record(out, &[x], Box::new(MaxSeqOp { argmax })))
    }

    /// Per-feature mean over unmasked positions of a `batch×len×d` tensor.
    pub fn mean_over_sequence(&mut self, x: Var, mask: &Mask) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        check_mask("mean_over_sequence", &shape, mask)?;
        let (bsz, l, d) = (shape[0], shape[1], shape[2]);
        let src = self.value(x).data();
        let mut out = vec![T::zero(); bsz * d];
        for b in 0..bsz {
            let acc = &mut out[b * d..(b + 1) * d];
            for p in 0..l {
                if mask.get(b, p) {
                    let row = &src[(b * l + p) * d..(b * l + p + 1) * d];
                    acc.iter_mut().zip(row).for_each(|(a, &v)| *a += v);
                }
            }
            let inv = T::one() / T::of(mask.count(b) as f64);
            acc.iter_mut().for_each(|a| *a *= inv);
        }
        let out = Tensor::new(vec![bsz, d], out)?;
        let op = MeanSeqOp { mask: mask.clone(), dim: d };
        Ok(self.record(out, &[x], Box::new(op)))
    }

    /// Mean-pools non-overlapping chunks of `chunk` positions, averaging
    /// only unmasked members. A chunk is unmasked when any member is.
    pub fn chunk_mean(&mut self, x: Var, mask: &Mask, chunk: usize) -> Result<(Var, Mask)> {
        let shape = self.shape(x).to_vec();
        check_mask("chunk_mean", &shape, mask)?;
        if chunk == 0 {
            return Err(TensorError::Config("chunk size must be positive".into()));
        }
        let (bsz, l, d) = (shape[0], shape[1], shape[2]);
        let chunks = l.div_ceil(chunk);
        let src = self.value(x).data();
        let mut out = vec![T::zero(); bsz * chunks * d];
        let mut chunk_mask = Vec::with_capacity(bsz * chunks);
        for b in 0..bsz {
            for c in 0..chunks {
                let acc = &mut out[(b * chunks + c) * d..(b * chunks + c + 1) * d];
                let mut n = 0usize;
                for p in c * chunk..((c + 1) * chunk).min(l) {
                    if mask.get(b, p) {
                        n += 1;
                        let row = &src[(b * l + p) * d..(b * l + p + 1) * d];
                        acc.iter_mut().zip(row).for_each(|(a, &v)| *a += v);
                    }
                }
                if n > 0 {
                    let inv = T::one() / T::of(n as f64);
                    acc.iter_mut().for_each(|a| *a *= inv);
                }
                chunk_mask.push(n > 0);
            }
        }
        let out = Tensor::new(vec![bsz, chunks, d], out)?;
        let out_mask = Mask::new(bsz, chunks, chunk_mask)?;
        let op = ChunkMeanOp {
            mask: mask.clone(),
            chunk,
            chunks,
            dim: d,
        };
        Ok((self.record(out, &[x], Box::new(op)), out_mask))
    }

    /// Concatenates along the last axis; leading axes must agree.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let first = xs
            .first()
            .ok_or_else(|| TensorError::Config("concat of zero tensors".into()))?;
        let lead = self.shape(*first)[..self.shape(*first).len() - 1].to_vec();
        let mut widths = Vec::with_capacity(xs.len());
        for &x in xs {
            let s = self.shape(x);
            if s.len() != lead.len() + 1 || s[..lead.len()] != lead[..] {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: self.shape(*first).to_vec(),
                    rhs: s.to_vec(),
                });
            }
            widths.push(s[s.len() - 1]);
        }
        let total: usize = widths.iter().sum();
        let rows = lead.iter().product::<usize>();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&x, &w) in xs.iter().zip(&widths) {
                data.extend_from_slice(&self.value(x).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let out = Tensor::new(shape, data)?;
        Ok(self.record(out, xs, Box::new(ConcatOp { widths })))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        Ok(self.record(out, &[x], Box::new(ReshapeOp)))
    }

    /// Repeats `x` along a new leading batch axis.
    pub fn expand_batch(&mut self, x: Var, batch: usize) -> Var {
        let v = self.value(x);
        let mut shape = vec![batch];
        shape.extend_from_slice(v.shape());
        let mut data = Vec::with_capacity(batch * v.len());
        for _ in 0..batch {
            data.extend_from_slice(v.data());
        }
        let out = Tensor::new(shape, data).expect("consistent expand shape");
        self.record(out, &[x], Box::new(ExpandOp))
    }
}
