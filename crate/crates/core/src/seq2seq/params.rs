use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linalg::Mat;
use super::ModelError;
use crate::corpus::PAD;

/// Decoding length cap: `floor(factor * source_len) + offset` tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxLenPolicy {
    pub factor: f64,
    pub offset: usize,
}

impl Default for MaxLenPolicy {
    fn default() -> Self {
        Self {
            factor: 2.5,
            offset: 10,
        }
    }
}

impl MaxLenPolicy {
    pub fn fixed(len: usize) -> Self {
        Self {
            factor: 0.0,
            offset: len,
        }
    }

    pub fn limit(&self, source_len: usize) -> usize {
        (self.factor * source_len as f64).floor() as usize + self.offset
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// LSTM width; the embedding width equals it.
    pub hidden_size: usize,
    pub vocab_size: usize,
    /// Applied to LSTM outputs only, in training mode.
    pub dropout: f64,
    pub max_len: MaxLenPolicy,
    pub beam_size: usize,
    /// When false the copy switch is pinned to 0 and the model is a plain
    /// attentional encoder-decoder.
    #[serde(default = "default_true")]
    pub copy: bool,
}

impl ModelConfig {
    pub fn new(hidden_size: usize, vocab_size: usize) -> Self {
        Self {
            hidden_size,
            vocab_size,
            dropout: 0.3,
            max_len: MaxLenPolicy::default(),
            beam_size: 12,
            copy: true,
        }
    }

    pub fn embed_size(&self) -> usize {
        self.hidden_size
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.hidden_size == 0 {
            return bad("hidden_size must be positive");
        }
        if self.vocab_size < 4 {
            return bad("vocab_size must cover the reserved tokens");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.beam_size == 0 {
            return bad("beam_size must be at least 1");
        }
        Ok(())
    }
}

/// Single-layer LSTM weights. Gate blocks are stacked in the order
/// input, forget, cell candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_input: Mat,
    pub w_hidden: Mat,
    pub bias: Vec<f64>,
}

impl LstmParams {
    fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_input: Mat::zeros(4 * hidden, input),
            w_hidden: Mat::zeros(4 * hidden, hidden),
            bias: vec![0.0; 4 * hidden],
        }
    }
}

/// Every learnable tensor. All matrices are stored output-major
/// (`rows = outputs`), so each is applied as `W x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// V×E, shared by encoder and decoder.
    pub embedding: Mat,
    pub encoder: LstmParams,
    /// Input is `[embedding; previous attentional vector]`, width E + H.
    pub decoder: LstmParams,
    /// H×H, applied to the decoder state.
    pub attn_query: Mat,
    /// H×H, applied to encoder states.
    pub attn_key: Mat,
    pub attn_score: Vec<f64>,
    /// H×2H over `[h_t; c_t]`.
    pub combine: Mat,
    pub combine_bias: Vec<f64>,
    /// V×H.
    pub output: Mat,
    pub output_bias: Vec<f64>,
    /// Over `[h_t; c_t; e(y_{t-1})]`, width 2H + E.
    pub switch: Vec<f64>,
    pub switch_bias: Vec<f64>,
}

/// Names of the parameter tensors in serialization order.
pub const TENSOR_NAMES: [&str; 16] = [
    "embedding",
    "encoder.w_input",
    "encoder.w_hidden",
    "encoder.bias",
    "decoder.w_input",
    "decoder.w_hidden",
    "decoder.bias",
    "attn_query",
    "attn_key",
    "attn_score",
    "combine",
    "combine_bias",
    "output",
    "output_bias",
    "switch",
    "switch_bias",
];

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        let (v, h) = (config.vocab_size, config.hidden_size);
        let e = config.embed_size();
        Self {
            embedding: Mat::zeros(v, e),
            encoder: LstmParams::zeros(e, h),
            decoder: LstmParams::zeros(e + h, h),
            attn_query: Mat::zeros(h, h),
            attn_key: Mat::zeros(h, h),
            attn_score: vec![0.0; h],
            combine: Mat::zeros(h, 2 * h),
            combine_bias: vec![0.0; h],
            output: Mat::zeros(v, h),
            output_bias: vec![0.0; v],
            switch: vec![0.0; 2 * h + e],
            switch_bias: vec![0.0; 1],
        }
    }

    /// Uniform in [-scale, scale] in tensor order; the PAD row stays zero.
    pub fn init_uniform(config: &ModelConfig, scale: f64, seed: u64) -> Self {
        let mut p = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (_, t) in p.tensors_mut() {
            for x in t.iter_mut() {
                *x = rng.gen_range(-scale..=scale);
            }
        }
        p.embedding.row_mut(PAD).fill(0.0);
        p
    }

    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        Self::init_uniform(config, 0.1, seed)
    }

    pub fn tensors(&self) -> [(&'static str, &[f64]); 16] {
        [
            (TENSOR_NAMES[0], &self.embedding.data),
            (TENSOR_NAMES[1], &self.encoder.w_input.data),
            (TENSOR_NAMES[2], &self.encoder.w_hidden.data),
            (TENSOR_NAMES[3], &self.encoder.bias),
            (TENSOR_NAMES[4], &self.decoder.w_input.data),
            (TENSOR_NAMES[5], &self.decoder.w_hidden.data),
            (TENSOR_NAMES[6], &self.decoder.bias),
            (TENSOR_NAMES[7], &self.attn_query.data),
            (TENSOR_NAMES[8], &self.attn_key.data),
            (TENSOR_NAMES[9], &self.attn_score),
            (TENSOR_NAMES[10], &self.combine.data),
            (TENSOR_NAMES[11], &self.combine_bias),
            (TENSOR_NAMES[12], &self.output.data),
            (TENSOR_NAMES[13], &self.output_bias),
            (TENSOR_NAMES[14], &self.switch),
            (TENSOR_NAMES[15], &self.switch_bias),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut [f64]); 16] {
        [
            (TENSOR_NAMES[0], &mut self.embedding.data),
            (TENSOR_NAMES[1], &mut self.encoder.w_input.data),
            (TENSOR_NAMES[2], &mut self.encoder.w_hidden.data),
            (TENSOR_NAMES[3], &mut self.encoder.bias),
            (TENSOR_NAMES[4], &mut self.decoder.w_input.data),
            (TENSOR_NAMES[5], &mut self.decoder.w_hidden.data),
            (TENSOR_NAMES[6], &mut self.decoder.bias),
            (TENSOR_NAMES[7], &mut self.attn_query.data),
            (TENSOR_NAMES[8], &mut self.attn_key.data),
            (TENSOR_NAMES[9], &mut self.attn_score),
            (TENSOR_NAMES[10], &mut self.combine.data),
            (TENSOR_NAMES[11], &mut self.combine_bias),
            (TENSOR_NAMES[12], &mut self.output.data),
            (TENSOR_NAMES[13], &mut self.output_bias),
            (TENSOR_NAMES[14], &mut self.switch),
            (TENSOR_NAMES[15], &mut self.switch_bias),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Checks every tensor length against the configuration.
    pub fn check_shapes(&self, config: &ModelConfig) -> Result<(), ModelError> {
        let expected = Self::zeros(config);
        for ((name, a), (_, b)) in self.tensors().iter().zip(expected.tensors().iter()) {
            if a.len() != b.len() {
                return Err(ModelError::ShapeMismatch {
                    tensor: name,
                    expected: b.len(),
                    found: a.len(),
                });
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}
