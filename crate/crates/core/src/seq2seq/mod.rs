//! Copy-augmented attentional encoder-decoder.
//!
//! Single-layer LSTM encoder and decoder over a tied embedding table,
//! additive attention, input feeding of the attentional vector, and a
//! sigmoid copy switch that mixes the vocabulary softmax with the attention
//! distribution over source positions:
//!
//! `p(w) = p(z=1) p_copy(w) + p(z=0) p_softmax(w)`
//!
//! Source-only words get per-example extended ids so they can be copied and
//! scored; the softmax assigns them zero mass. Gradients are computed
//! exactly by hand-written backpropagation through time.

mod beam;
mod checkpoint;
mod forward;
mod grad;
pub mod linalg;
mod params;

use thiserror::Error;

pub use beam::{beam_search, greedy_decode, DecodeResult};
pub use checkpoint::{Checkpoint, CheckpointHeader, FORMAT_VERSION, MAGIC};
pub use forward::{
    attend, decode_step, encode_source, mix_distribution, sequence_nll, DecoderState, Encoded, Example, StepOutput,
};
pub use grad::{batch_loss, example_rng, param_gradients, param_gradients_with};
pub use params::{LstmParams, MaxLenPolicy, ModelConfig, ModelParams, TENSOR_NAMES};

use crate::corpus::{detokenize, numericalize, ExtensionMap, Vocabulary, EOS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("token id {id} out of range (limit {limit})")]
    IdOutOfRange { id: usize, limit: usize },
    #[error("empty source sequence")]
    EmptySource,
    #[error("empty batch")]
    EmptyBatch,
    #[error("loss or gradient is not finite")]
    NonFiniteLoss,
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("tensor `{tensor}` has {found} values, expected {expected}")]
    ShapeMismatch {
        tensor: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Numericalizes a (source, target) token pair. Target words missing from
/// the vocabulary but present in the source get extended ids; EOS is
/// appended.
pub fn make_example(vocab: &Vocabulary, source: &[String], target: &[String]) -> Example {
    let (src, ext) = numericalize(source, vocab, Some(source));
    let (mut tgt, _) = numericalize(target, vocab, Some(source));
    tgt.push(EOS);
    Example {
        source: src,
        target: tgt,
        ext_size: ext.len(),
    }
}

/// Anything that maps a tokenized complex sentence to a tokenized rephrasing.
pub trait Rephraser: Sync {
    fn rephrase(&self, source: &[String]) -> Vec<String>;
}

/// Model parameters bundled with their vocabulary, working on tokens.
#[derive(Debug, Clone)]
pub struct Translator {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub vocab: Vocabulary,
}

impl Translator {
    pub fn new(config: ModelConfig, params: ModelParams, vocab: Vocabulary) -> Result<Self, ModelError> {
        config.validate()?;
        params.check_shapes(&config)?;
        if vocab.len() != config.vocab_size {
            return Err(ModelError::InvalidConfig(format!(
                "vocabulary has {} entries, config says {}",
                vocab.len(),
                config.vocab_size
            )));
        }
        Ok(Self { config, params, vocab })
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self, ModelError> {
        let vocab = ck.vocabulary();
        Self::new(ck.header.config, ck.params, vocab)
    }

    /// Decodes with the given beam width (1 = greedy). Returns output tokens
    /// without EOS together with the raw result.
    pub fn decode(&self, source: &[String], beam: usize) -> Result<(Vec<String>, DecodeResult), ModelError> {
        let (ids, ext) = numericalize(source, &self.vocab, Some(source));
        let res = if beam <= 1 {
            greedy_decode(&self.params, &self.config, &ids, ext.len())?
        } else {
            beam_search(&self.params, &self.config, &ids, ext.len(), beam)?
        };
        Ok((self.words(&res, &ext), res))
    }

    pub fn words(&self, res: &DecodeResult, ext: &ExtensionMap) -> Vec<String> {
        detokenize(res.content(), &self.vocab, ext)
    }

    /// Fixed beam width view usable as a [`Rephraser`].
    pub fn with_beam(&self, beam: usize) -> BeamDecoder<'_> {
        BeamDecoder { model: self, beam }
    }
}

pub struct BeamDecoder<'a> {
    model: &'a Translator,
    beam: usize,
}

impl Rephraser for BeamDecoder<'_> {
    fn rephrase(&self, source: &[String]) -> Vec<String> {
        if source.is_empty() {
            return Vec::new();
        }
        self.model
            .decode(source, self.beam)
            .map(|(w, _)| w)
            .unwrap_or_default()
    }
}

#[cfg(test)]
mod tests;
