use tensor::nn::{sinusoidal_positions, Embedding, LayerNorm, Linear, MultiHeadAttention};
use tensor::{Element, Graph, Mask, ParamStore, Rng, Tensor, Var};

use super::{check, Forward, Inputs, ModelConfig};
use crate::error::Result;
use crate::tokenizer::PAD;

/// Post-norm encoder block: `norm1(x + drop(attn(x)))`, then
/// `norm2(h + drop(ff(h)))` with a two-layer relu feedforward.
#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub attention: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub ff_in: Linear,
    pub ff_out: Linear,
    pub norm2: LayerNorm,
}

impl EncoderLayer {
    fn forward<T: Element>(
        &self,
        g: &mut Graph<'_, T>,
        x: Var,
        mask: &Mask,
        dropout: f64,
        fwd: &mut Forward<'_>,
    ) -> Result<Var> {
        let a = self.attention.self_attention(g, x, mask)?;
        let a = fwd.dropout(g, a, dropout)?;
        let h = g.add(x, a)?;
        let h = self.norm1.forward(g, h)?;
        let f = self.ff_in.forward(g, h)?;
        let f = g.relu(f);
        let f = self.ff_out.forward(g, f)?;
        let f = fwd.dropout(g, f, dropout)?;
        let out = g.add(h, f)?;
        Ok(self.norm2.forward(g, out)?)
    }
}

/// Token embeddings plus fixed sinusoidal positions, through a stack of
/// encoder layers. Produces `batch × len × width`.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub embedding: Embedding,
    pub layers: Vec<EncoderLayer>,
    positions: Option<Vec<f64>>,
    width: usize,
    dropout: f64,
}

impl Encoder {
    pub fn new<T: Element>(ps: &mut ParamStore<T>, cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        let d = cfg.embed_dim;
        let embedding = Embedding::new(ps, "embedding", cfg.vocab_size, d, Some(PAD), rng);
        let mut layers = Vec::with_capacity(cfg.layers);
        for i in 0..cfg.layers {
            let name = format!("encoder.{i}");
            layers.push(EncoderLayer {
                attention: MultiHeadAttention::new(ps, &format!("{name}.attention"), d, cfg.heads, rng)?,
                norm1: LayerNorm::new(ps, &format!("{name}.norm1"), d),
                ff_in: Linear::new(ps, &format!("{name}.ff_in"), d, cfg.ff_dim, rng),
                ff_out: Linear::new(ps, &format!("{name}.ff_out"), cfg.ff_dim, d, rng),
                norm2: LayerNorm::new(ps, &format!("{name}.norm2"), d),
            });
        }
        let positions = cfg
            .positional
            .then(|| sinusoidal_positions::<f64>(cfg.max_len, d).into_data());
        Ok(Self {
            embedding,
            layers,
            positions,
            width: d,
            dropout: cfg.dropout,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub(crate) fn forward<T: Element>(&self, g: &mut Graph<'_, T>, x: &Inputs, fwd: &mut Forward<'_>) -> Result<Var> {
        let mut h = self.embedding.forward(g, &x.ids, x.batch, x.len)?;
        if let Some(table) = &self.positions {
            let pe = Tensor::from_fn(&[x.len, self.width], |i| T::of(table[i]));
            let pe = g.constant(pe);
            let pe = g.expand_batch(pe, x.batch);
            h = g.add(h, pe)?;
        }
        let mut h = check(g, h, "embedding")?;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, h, &x.mask, self.dropout, fwd)?;
            h = check(g, h, &format!("encoder.{i}"))?;
        }
        Ok(h)
    }
}
