use tensor::nn::{conv_output_mask, Conv1d, Embedding, Linear};
use tensor::{Element, Graph, ParamStore, Rng, Var};

use super::{check, Forward, Inputs, ModelConfig};
use crate::error::Result;
use crate::tokenizer::PAD;

/// Parallel convolutions of different widths over the embeddings, each
/// relu'd and max-pooled over its valid positions, then concatenated into
/// a dropout and linear classifier.
#[derive(Clone, Debug)]
pub struct Cnn {
    pub embedding: Embedding,
    pub convs: Vec<Conv1d>,
    pub classifier: Linear,
    dropout: f64,
}

impl Cnn {
    pub fn new<T: Element>(ps: &mut ParamStore<T>, cfg: &ModelConfig, rng: &mut Rng) -> Self {
        let embedding = Embedding::new(ps, "embedding", cfg.vocab_size, cfg.embed_dim, Some(PAD), rng);
        let convs = cfg
            .kernel_sizes
            .iter()
            .map(|&w| Conv1d::new(ps, &format!("conv{w}"), cfg.embed_dim, cfg.filters, w, rng))
            .collect::<Vec<_>>();
        let classifier = Linear::new(ps, "classifier", cfg.filters * convs.len(), cfg.num_classes, rng);
        Self {
            embedding,
            convs,
            classifier,
            dropout: cfg.dropout,
        }
    }

    pub(crate) fn forward<T: Element>(&self, g: &mut Graph<'_, T>, x: &Inputs, fwd: &mut Forward<'_>) -> Result<Var> {
        let e = self.embedding.forward(g, &x.ids, x.batch, x.len)?;
        let e = check(g, e, "embedding")?;
        let mut pooled = Vec::with_capacity(self.convs.len());
        for conv in &self.convs {
            let c = conv.forward(g, e)?;
            let c = g.relu(c);
            let p = g.max_over_sequence(c, &conv_output_mask(&x.mask, conv.width))?;
            pooled.push(check(g, p, &format!("conv{}", conv.width))?);
        }
        let h = g.concat(&pooled)?;
        let h = fwd.dropout(g, h, self.dropout)?;
        Ok(self.classifier.forward(g, h)?)
    }
}
