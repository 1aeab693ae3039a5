//! The four classifiers, built from a [`ModelConfig`].
//!
//! Every model maps an [`EncodedBatch`] to `batch × classes` logits and
//! depends on real tokens only. Token ids under the mask are replaced by
//! PAD, whose embedding row is zero and frozen. Batches are also cut to
//! their longest sequence, but never below the widest convolution, so
//! short inputs are convolved against PAD embeddings.

mod cnn;
mod encoder;
mod feedforward;
mod multiscale;
mod transformer;

use std::fmt;

use serde::{Deserialize, Serialize};
use tensor::{Element, Graph, Mask, ParamStore, Rng, Tensor, Var};

use crate::corpus::{EncodedBatch, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::tokenizer::{MAX_LEN, PAD};

pub use cnn::Cnn;
pub use encoder::{Encoder, EncoderLayer};
pub use feedforward::Feedforward;
pub use multiscale::Multiscale;
pub use transformer::Transformer;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Feedforward,
    Cnn,
    Transformer,
    Multiscale,
}

impl Arch {
    pub const ALL: [Arch; 4] = [Arch::Feedforward, Arch::Cnn, Arch::Transformer, Arch::Multiscale];

    pub fn name(self) -> &'static str {
        match self {
            Arch::Feedforward => "feedforward",
            Arch::Cnn => "cnn",
            Arch::Transformer => "transformer",
            Arch::Multiscale => "multiscale",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arch::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown architecture {s:?}")))
    }
}

/// Architecture hyperparameters. Fields not used by `arch` are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub num_classes: usize,
    pub max_len: usize,
    pub dropout: f64,
    /// Feedforward: output widths of the hidden layers.
    pub hidden_dims: Vec<usize>,
    /// CNN: one parallel branch per kernel width.
    pub kernel_sizes: Vec<usize>,
    pub filters: usize,
    /// Transformer encoder (also the multiscale base).
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub positional: bool,
    /// Multiscale head.
    pub word_heads: usize,
    pub phrase_heads: usize,
    pub sentence_heads: usize,
    pub chunk_size: usize,
    pub conv_width: usize,
    pub classifier_dropout: f64,
}

impl ModelConfig {
    pub fn new(arch: Arch, vocab_size: usize) -> Self {
        Self::with_dim(arch, vocab_size, 128)
    }

    /// Defaults at embedding width `d`; widths that scale with the model
    /// (encoder feedforward, multiscale head) follow `d`.
    pub fn with_dim(arch: Arch, vocab_size: usize, d: usize) -> Self {
        Self {
            arch,
            vocab_size,
            embed_dim: d,
            num_classes: NUM_CLASSES,
            max_len: MAX_LEN,
            dropout: 0.3,
            hidden_dims: vec![256, 128, 64],
            kernel_sizes: vec![3, 4, 5],
            filters: 128,
            layers: 2,
            heads: 2,
            ff_dim: 2 * d,
            positional: true,
            word_heads: 8,
            phrase_heads: 4,
            sentence_heads: 2,
            chunk_size: 4,
            conv_width: 3,
            classifier_dropout: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.vocab_size < 2 {
            return bad(format!("vocabulary of {} tokens is too small", self.vocab_size));
        }
        if self.embed_dim == 0 || self.num_classes == 0 {
            return bad("embedding width and class count must be positive".into());
        }
        for p in [self.dropout, self.classifier_dropout] {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("dropout {p} outside [0, 1)"));
            }
        }
        if self.max_len < self.min_len() {
            return bad(format!("max_len {} is shorter than the widest kernel", self.max_len));
        }
        match self.arch {
            Arch::Feedforward => {
                if self.hidden_dims.contains(&0) {
                    return bad("hidden widths must be positive".into());
                }
            }
            Arch::Cnn => {
                if self.kernel_sizes.is_empty() || self.kernel_sizes.contains(&0) || self.filters == 0 {
                    return bad("cnn needs at least one positive kernel width and filters".into());
                }
            }
            Arch::Transformer | Arch::Multiscale => {
                if self.heads == 0 || !self.embed_dim.is_multiple_of(self.heads) {
                    return bad(format!("width {} not divisible by {} heads", self.embed_dim, self.heads));
                }
                if self.ff_dim == 0 {
                    return bad("encoder feedforward width must be positive".into());
                }
            }
        }
        if self.arch == Arch::Multiscale {
            let most = self.word_heads.max(self.phrase_heads).max(self.sentence_heads);
            if [self.word_heads, self.phrase_heads, self.sentence_heads].contains(&0) || !self.embed_dim.is_multiple_of(most) {
                return bad(format!("multiscale width {} not divisible by {most} heads", self.embed_dim));
            }
            if self.chunk_size == 0 || self.conv_width == 0 || self.embed_dim < 2 {
                return bad("multiscale chunk size, conv width and width/2 must be positive".into());
            }
        }
        Ok(())
    }

    /// Shortest sequence length a batch is cut to.
    pub fn min_len(&self) -> usize {
        match self.arch {
            Arch::Cnn => self.kernel_sizes.iter().copied().max().unwrap_or(1),
            Arch::Multiscale => self.conv_width,
            Arch::Feedforward | Arch::Transformer => 1,
        }
    }
}

/// Mutable state threaded through a forward pass.
pub struct Forward<'r> {
    pub train: bool,
    pub rng: &'r mut Rng,
}

impl Forward<'_> {
    pub(crate) fn dropout<T: Element>(&mut self, g: &mut Graph<'_, T>, x: Var, p: f64) -> Result<Var> {
        Ok(g.dropout(x, p, self.train, self.rng)?)
    }
}

/// Fails if `x` holds a NaN or infinity, naming `layer`.
pub(crate) fn check<T: Element>(g: &Graph<'_, T>, x: Var, layer: &str) -> Result<Var> {
    if g.value(x).all_finite() {
        Ok(x)
    } else {
        Err(Error::NonFiniteLayer { layer: layer.to_string() })
    }
}

/// Token ids and mask of a batch after trimming, with masked ids forced to
/// PAD.
pub struct Inputs {
    pub ids: Vec<usize>,
    pub mask: Mask,
    pub batch: usize,
    pub len: usize,
}

impl Inputs {
    pub fn new(batch: &EncodedBatch, min_len: usize, vocab_size: usize) -> Result<Self> {
        let (ids, mask) = batch.trimmed(min_len);
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab_size) {
            return Err(Error::Data(format!("token id {bad} outside vocabulary of {vocab_size}")));
        }
        debug_assert!(ids.iter().zip(mask.data()).all(|(&i, &m)| m || i == PAD));
        Ok(Self {
            batch: mask.batch(),
            len: mask.len(),
            ids,
            mask,
        })
    }
}

#[derive(Clone, Debug)]
pub enum Net {
    Feedforward(Feedforward),
    Cnn(Cnn),
    Transformer(Transformer),
    Multiscale(Multiscale),
}

/// A classifier: configuration, parameters and train/eval mode.
#[derive(Clone, Debug)]
pub struct Model<T: Element = f32> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    net: Net,
    training: bool,
}

impl<T: Element> Model<T> {
    /// Builds the network, drawing initial weights from `rng` in parameter
    /// creation order. New models start in train mode.
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut ps = ParamStore::new();
        let net = match config.arch {
            Arch::Feedforward => Net::Feedforward(Feedforward::new(&mut ps, &config, rng)),
            Arch::Cnn => Net::Cnn(Cnn::new(&mut ps, &config, rng)),
            Arch::Transformer => Net::Transformer(Transformer::new(&mut ps, &config, rng)?),
            Arch::Multiscale => Net::Multiscale(Multiscale::new(&mut ps, &config, rng)?),
        };
        Ok(Self {
            config,
            params: ps,
            net,
            training: true,
        })
    }

    /// Rebuilds the model for `config` and takes its parameters from
    /// `params`, which must match by name and shape.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        let mut model = Self::new(config, &mut tensor::rng::seeded(0))?;
        if model.params.len() != params.len() {
            return Err(Error::Config(format!(
                "checkpoint has {} parameters, model expects {}",
                params.len(),
                model.params.len()
            )));
        }
        for (mine, theirs) in model.params.iter().zip(params.iter()) {
            if mine.name != theirs.name || mine.value.shape() != theirs.value.shape() {
                return Err(Error::Config(format!(
                    "checkpoint parameter {} {:?} does not match model parameter {} {:?}",
                    theirs.name,
                    theirs.value.shape(),
                    mine.name,
                    mine.value.shape()
                )));
            }
        }
        model.params = params;
        Ok(model)
    }

    pub fn net(&self) -> &Net {
        &self.net
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn train(&mut self) {
        self.training = true;
    }

    pub fn eval(&mut self) {
        self.training = false;
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_elements()
    }

    /// Records the forward pass on `g`, which must have been created over
    /// this model's parameters. Dropout follows the model's mode.
    pub fn forward<'a>(&self, g: &mut Graph<'a, T>, batch: &EncodedBatch, rng: &mut Rng) -> Result<Var> {
        self.run(g, batch, rng, self.training)
    }

    /// Eval-mode logits (`batch × classes`) without recording gradients.
    pub fn logits(&self, batch: &EncodedBatch) -> Result<Tensor<T>> {
        let mut g = Graph::inference(&self.params);
        // eval mode never draws from the generator
        let mut rng = tensor::rng::seeded(0);
        let out = self.run(&mut g, batch, &mut rng, false)?;
        Ok(g.value(out).clone())
    }

    fn run<'a>(&self, g: &mut Graph<'a, T>, batch: &EncodedBatch, rng: &mut Rng, train: bool) -> Result<Var> {
        let inputs = Inputs::new(batch, self.config.min_len(), self.config.vocab_size)?;
        let mut fwd = Forward { train, rng };
        let logits = match &self.net {
            Net::Feedforward(n) => n.forward(g, &inputs, &mut fwd)?,
            Net::Cnn(n) => n.forward(g, &inputs, &mut fwd)?,
            Net::Transformer(n) => n.forward(g, &inputs, &mut fwd)?,
            Net::Multiscale(n) => n.forward(g, &inputs, &mut fwd)?,
        };
        check(g, logits, "logits")
    }
}

impl Model<f32> {
    /// Writes parameters plus the config (under `meta.model`) and any
    /// extra metadata fields.
    pub fn save(
        &self,
        path: &std::path::Path,
        rng: Option<tensor::rng::RngState>,
        vocab_hash: Option<String>,
        extra: serde_json::Map<String, serde_json::Value>,
    ) -> Result<()> {
        let mut meta = extra;
        meta.insert("model".into(), serde_json::to_value(&self.config)?);
        tensor::checkpoint::save(path, &self.params, rng, vocab_hash, serde_json::Value::Object(meta))?;
        Ok(())
    }

    /// Reads a checkpoint written by [`Model::save`]. The model comes back
    /// in eval mode.
    pub fn load(path: &std::path::Path) -> Result<(Self, tensor::checkpoint::CheckpointHeader)> {
        let (header, params) = tensor::checkpoint::load::<f32>(path)?;
        let config: ModelConfig = serde_json::from_value(
            header
                .meta
                .get("model")
                .cloned()
                .ok_or_else(|| Error::Config(format!("{}: checkpoint has no model config", path.display())))?,
        )?;
        let mut model = Self::from_params(config, params)?;
        model.eval();
        Ok((model, header))
    }
}
