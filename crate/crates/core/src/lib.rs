//! Split-and-rephrase workbench.
//!
//! * [`corpus`]: JSONL corpora, tokenization, vocabularies.
//! * [`splitkit`]: triple-constrained train/dev/test splitting and leakage statistics.
//! * [`seq2seq`]: copy-augmented attentional LSTM encoder-decoder with exact gradients.
//! * [`trainer`]: SGD with learning-rate decay and early stopping on dev BLEU.
//! * [`evalkit`]: averaged per-prediction multi-reference BLEU, #S/C and #T/S.
//! * [`analysis`]: verbatim overlap, entity probes, heuristic fact audits, attention heatmaps.
//! * [`synth`]: seeded synthetic corpora for desk-scale experiments.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod cli;
pub mod corpus;
pub mod evalkit;
pub mod par;
pub mod seq2seq;
pub mod splitkit;
pub mod synth;
pub mod trainer;
