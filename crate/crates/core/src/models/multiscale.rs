use tensor::nn::{conv_output_mask, glorot_uniform, Conv1d, LayerNorm, Linear, MultiHeadAttention};
use tensor::{Element, Graph, ParamId, ParamStore, Rng, Var};

use super::{check, Encoder, Forward, Inputs, ModelConfig};
use crate::error::Result;

/// Multi-granularity attention head over an encoder stack.
///
/// Four streams each reduce the encoder output to one `width` vector:
/// word-level self-attention, self-attention over mean-pooled chunks of
/// tokens, attention pooling with a single learned query, and a relu
/// convolution. All but the pooling stream end in a masked mean. The four
/// vectors are concatenated, fused back to `width`, and classified through
/// a `width/2` hidden layer.
#[derive(Clone, Debug)]
pub struct Multiscale {
    pub encoder: Encoder,
    pub word: MultiHeadAttention,
    pub phrase: MultiHeadAttention,
    pub sentence: MultiHeadAttention,
    pub sentence_query: ParamId,
    pub conv: Conv1d,
    pub fusion: Linear,
    pub fusion_norm: LayerNorm,
    pub hidden: Linear,
    pub classifier: Linear,
    chunk_size: usize,
    dropout: f64,
    classifier_dropout: f64,
}

impl Multiscale {
    pub fn new<T: Element>(ps: &mut ParamStore<T>, cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        let encoder = Encoder::new(ps, cfg, rng)?;
        let d = cfg.embed_dim;
        let word = MultiHeadAttention::new(ps, "word", d, cfg.word_heads, rng)?;
        let phrase = MultiHeadAttention::new(ps, "phrase", d, cfg.phrase_heads, rng)?;
        let sentence = MultiHeadAttention::new(ps, "sentence", d, cfg.sentence_heads, rng)?;
        let sentence_query = ps.add("sentence.query", glorot_uniform(&[1, d], 1, d, rng));
        let conv = Conv1d::new(ps, "conv", d, d, cfg.conv_width, rng);
        let fusion = Linear::new(ps, "fusion", 4 * d, d, rng);
        let fusion_norm = LayerNorm::new(ps, "fusion.norm", d);
        let hidden = Linear::new(ps, "hidden", d, d / 2, rng);
        let classifier = Linear::new(ps, "classifier", d / 2, cfg.num_classes, rng);
        Ok(Self {
            encoder,
            word,
            phrase,
            sentence,
            sentence_query,
            conv,
            fusion,
            fusion_norm,
            hidden,
            classifier,
            chunk_size: cfg.chunk_size,
            dropout: cfg.dropout,
            classifier_dropout: cfg.classifier_dropout,
        })
    }

    /// Width of the concatenated streams.
    pub fn concat_width(&self) -> usize {
        self.fusion.fan_in
    }

    pub fn classifier_hidden(&self) -> usize {
        self.hidden.fan_out
    }

    pub(crate) fn forward<T: Element>(&self, g: &mut Graph<'_, T>, x: &Inputs, fwd: &mut Forward<'_>) -> Result<Var> {
        let h = self.encoder.forward(g, x, fwd)?;
        let d = self.encoder.width();

        let w = self.word.self_attention(g, h, &x.mask)?;
        let word = g.mean_over_sequence(w, &x.mask)?;
        let word = check(g, word, "word")?;

        let (chunks, chunk_mask) = g.chunk_mean(h, &x.mask, self.chunk_size)?;
        let p = self.phrase.self_attention(g, chunks, &chunk_mask)?;
        let phrase = g.mean_over_sequence(p, &chunk_mask)?;
        let phrase = check(g, phrase, "phrase")?;

        let q = g.param(self.sentence_query);
        let q = g.expand_batch(q, x.batch);
        let s = self.sentence.forward(g, q, h, &x.mask)?;
        let sentence = g.reshape(s, &[x.batch, d])?;
        let sentence = check(g, sentence, "sentence")?;

        let c = self.conv.forward(g, h)?;
        let c = g.relu(c);
        let conv = g.mean_over_sequence(c, &conv_output_mask(&x.mask, self.conv.width))?;
        let conv = check(g, conv, "conv")?;

        let z = g.concat(&[word, phrase, sentence, conv])?;
        let z = self.fusion.forward(g, z)?;
        let z = self.fusion_norm.forward(g, z)?;
        let z = g.relu(z);
        let z = fwd.dropout(g, z, self.dropout)?;
        let z = check(g, z, "fusion")?;
        let z = self.hidden.forward(g, z)?;
        let z = g.relu(z);
        let z = fwd.dropout(g, z, self.classifier_dropout)?;
        let z = check(g, z, "hidden")?;
        Ok(self.classifier.forward(g, z)?)
    }
}
