use tensor::nn::{Embedding, LayerNorm, Linear};
use tensor::{Element, Graph, ParamStore, Rng, Var};

use super::{check, Forward, Inputs, ModelConfig};
use crate::error::Result;
use crate::tokenizer::PAD;

/// Embeddings, masked max over the sequence, then a stack of
/// linear → layer norm → relu → dropout blocks and a linear classifier.
#[derive(Clone, Debug)]
pub struct Feedforward {
    pub embedding: Embedding,
    pub hidden: Vec<(Linear, LayerNorm)>,
    pub classifier: Linear,
    dropout: f64,
}

impl Feedforward {
    pub fn new<T: Element>(ps: &mut ParamStore<T>, cfg: &ModelConfig, rng: &mut Rng) -> Self {
        let embedding = Embedding::new(ps, "embedding", cfg.vocab_size, cfg.embed_dim, Some(PAD), rng);
        let mut width = cfg.embed_dim;
        let mut hidden = Vec::with_capacity(cfg.hidden_dims.len());
        for (i, &out) in cfg.hidden_dims.iter().enumerate() {
            let linear = Linear::new(ps, &format!("hidden.{i}"), width, out, rng);
            let norm = LayerNorm::new(ps, &format!("hidden.{i}.norm"), out);
            hidden.push((linear, norm));
            width = out;
        }
        let classifier = Linear::new(ps, "classifier", width, cfg.num_classes, rng);
        Self {
            embedding,
            hidden,
            classifier,
            dropout: cfg.dropout,
        }
    }

    pub(crate) fn forward<T: Element>(&self, g: &mut Graph<'_, T>, x: &Inputs, fwd: &mut Forward<'_>) -> Result<Var> {
        let e = self.embedding.forward(g, &x.ids, x.batch, x.len)?;
        let e = check(g, e, "embedding")?;
        let mut h = g.max_over_sequence(e, &x.mask)?;
        for (i, (linear, norm)) in self.hidden.iter().enumerate() {
            let z = linear.forward(g, h)?;
            let z = norm.forward(g, z)?;
            let z = g.relu(z);
            h = fwd.dropout(g, z, self.dropout)?;
            h = check(g, h, &format!("hidden.{i}"))?;
        }
        Ok(self.classifier.forward(g, h)?)
    }
}
