//! Checkpoint file layout (all integers little-endian):
//!
//! ```text
//! 8 bytes   magic "SPRPCKPT"
//! u64       header length N
//! N bytes   UTF-8 JSON header
//! f64 * k   parameter tensors, in `TENSOR_NAMES` order, each row-major
//! ```
//!
//! Tensor lengths follow from the header's model configuration.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ModelConfig, ModelParams};
use super::ModelError;
use crate::corpus::Vocabulary;

pub const MAGIC: &[u8; 8] = b"SPRPCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub tool_version: String,
    pub config: ModelConfig,
    pub vocab_hash: String,
    /// Non-reserved vocabulary tokens in id order.
    pub vocab: Vec<String>,
    pub seed: u64,
    pub epoch: usize,
    pub dev_score: Option<f64>,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn new(
        config: ModelConfig,
        vocab: &Vocabulary,
        params: ModelParams,
        seed: u64,
        epoch: usize,
        dev_score: Option<f64>,
        learning_rate: f64,
    ) -> Self {
        Self {
            header: CheckpointHeader {
                format_version: FORMAT_VERSION,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                config,
                vocab_hash: vocab.hash(),
                vocab: vocab.tokens().to_vec(),
                seed,
                epoch,
                dev_score,
                learning_rate,
            },
            params,
        }
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::from_tokens(self.header.vocab.iter().cloned())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("checkpoint header serializes");
        let mut out = Vec::with_capacity(16 + header.len() + 8 * self.params.num_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, t) in self.params.tensors() {
            for x in t {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let bad = |m: &str| ModelError::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic"));
        }
        let n = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(16..16 + n).ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader = serde_json::from_slice(body).map_err(|e| bad(&e.to_string()))?;
        if header.format_version != FORMAT_VERSION {
            return Err(bad("unsupported format version"));
        }
        header.config.validate()?;
        let vocab = Vocabulary::from_tokens(header.vocab.iter().cloned());
        if vocab.hash() != header.vocab_hash || vocab.len() != header.config.vocab_size {
            return Err(bad("vocabulary does not match header"));
        }
        let mut params = ModelParams::zeros(&header.config);
        let mut chunks = bytes[16 + n..].chunks_exact(8);
        let expected = params.num_params();
        if bytes.len() - 16 - n != 8 * expected {
            return Err(bad("parameter payload has the wrong length"));
        }
        for (_, t) in params.tensors_mut() {
            for x in t.iter_mut() {
                *x = f64::from_le_bytes(chunks.next().expect("length checked").try_into().expect("8 bytes"));
            }
        }
        Ok(Self { header, params })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_bytes()).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = fs::read(path).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}
