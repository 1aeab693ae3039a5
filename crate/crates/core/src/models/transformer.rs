use tensor::nn::Linear;
use tensor::{Element, Graph, ParamStore, Rng, Var};

use super::{check, Encoder, Forward, Inputs, ModelConfig};
use crate::error::Result;

/// Encoder stack, masked max over the sequence, then a relu classifier
/// (`width → width → classes`).
#[derive(Clone, Debug)]
pub struct Transformer {
    pub encoder: Encoder,
    pub hidden: Linear,
    pub classifier: Linear,
}

impl Transformer {
    pub fn new<T: Element>(ps: &mut ParamStore<T>, cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        let encoder = Encoder::new(ps, cfg, rng)?;
        let d = cfg.embed_dim;
        Ok(Self {
            encoder,
            hidden: Linear::new(ps, "hidden", d, d, rng),
            classifier: Linear::new(ps, "classifier", d, cfg.num_classes, rng),
        })
    }

    pub(crate) fn forward<T: Element>(&self, g: &mut Graph<'_, T>, x: &Inputs, fwd: &mut Forward<'_>) -> Result<Var> {
        let h = self.encoder.forward(g, x, fwd)?;
        let pooled = g.max_over_sequence(h, &x.mask)?;
        let z = self.hidden.forward(g, pooled)?;
        let z = g.relu(z);
        let z = check(g, z, "hidden")?;
        Ok(self.classifier.forward(g, z)?)
    }
}
