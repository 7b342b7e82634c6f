//! A fixed-window MLP language model over token ids, entirely in `f64`.
//!
//! The model embeds the last `context_window` tokens (left-padded with PAD),
//! concatenates the embeddings, pushes them through tanh hidden layers, and
//! projects to a softmax over the vocabulary. Everything downstream scores
//! sequences through [`Model::sequence_nll`]; training and unlearning consume
//! the hand-derived gradients from [`Model::nll_gradient`], which are checked
//! against central finite differences in the test suite.
//!
//! All public likelihoods are in bits (base-2 logs). Loss covers every token
//! after BOS, including the source side of translation pairs.

mod config;
mod forward;
mod params;

pub use config::ModelConfig;
pub use forward::SequenceNll;
pub use params::{Gradients, Mat, ModelParams};

use crate::corpus::{Example, Vocab};
use crate::error::{Error, Result};

/// Parameters plus the config that gives them meaning. Evaluation methods
/// take `&self` and are safe to call from many threads at once; only
/// training/unlearning mutate `params`.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    /// Fresh model: hidden weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)],
    /// biases and the whole output projection zero, so the initial next-token
    /// distribution is exactly uniform.
    pub fn init(config: ModelConfig, seed_value: u64) -> Result<Model> {
        config.validate()?;
        let params = ModelParams::init(&config, seed_value);
        Ok(Model { config, params })
    }

    /// Total NLL of a token sequence in bits, plus the per-token breakdown.
    /// Scores every token after the first; the caller passes framed
    /// sequences, so position 0 is BOS.
    pub fn sequence_nll(&self, tokens: &[u32]) -> Result<SequenceNll> {
        forward::sequence_nll(&self.config, &self.params, tokens)
    }

    /// Mean-over-examples sequence NLL of a batch (bits) and its exact
    /// gradient.
    pub fn nll_gradient(&self, batch: &[&[u32]]) -> Result<(f64, Gradients)> {
        forward::nll_gradient(&self.config, &self.params, batch)
    }

    /// Argmax decoding from a prefix that must end with the separator:
    /// emits tokens until EOS (excluded) or `max_len`. Ties break toward the
    /// lowest token id.
    pub fn greedy_decode(&self, prefix: &[u32], vocab: &Vocab, max_len: usize) -> Result<Vec<u32>> {
        forward::greedy_decode(&self.config, &self.params, prefix, vocab, max_len)
    }

    /// Mean of the embedding rows of the example's non-special tokens: the
    /// point used for L2 neighbor search.
    pub fn embed_sequence(&self, example: &Example, vocab: &Vocab) -> Result<Vec<f64>> {
        let e = self.params.embedding.cols;
        let mut acc = vec![0.0; e];
        let mut n = 0usize;
        for &t in &example.tokens {
            if vocab.is_special(t) {
                continue;
            }
            let row = self.params.embedding.row(t as usize);
            for (a, &x) in acc.iter_mut().zip(row) {
                *a += x;
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::Model(format!(
                "example {} has no non-special tokens to embed",
                example.id
            )));
        }
        for a in &mut acc {
            *a /= n as f64;
        }
        Ok(acc)
    }
}
