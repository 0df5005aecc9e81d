use std::cmp::Ordering;

use serde::Serialize;

use super::forward::{decode_step, encode_source, DecoderState, Encoded};
use super::params::{ModelConfig, ModelParams};
use super::ModelError;
use crate::corpus::{BOS, EOS, UNK};

/// Best hypothesis from decoding, with per-step traces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecodeResult {
    /// Extended ids, including the final EOS when one was produced.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    /// `[T_out][T_in]` attention weights, one row per emitted token.
    pub attention: Vec<Vec<f64>>,
    /// Copy-switch probability at each output step.
    pub copy_switch: Vec<f64>,
}

impl DecodeResult {
    /// Output ids without the terminating EOS.
    pub fn content(&self) -> &[usize] {
        match self.tokens.last() {
            Some(&EOS) => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }
}

#[derive(Clone)]
struct Hyp {
    tokens: Vec<usize>,
    log_prob: f64,
    state: DecoderState,
    attention: Vec<Vec<f64>>,
    switch: Vec<f64>,
}

fn encode_eval(params: &ModelParams, config: &ModelConfig, source_ext: &[usize]) -> Result<Encoded, ModelError> {
    let inputs: Vec<usize> = source_ext
        .iter()
        .map(|&i| if i >= config.vocab_size { UNK } else { i })
        .collect();
    encode_source(params, config, &inputs, None)
}

/// Beam search over `ln p(w)` without length normalization.
///
/// Hypotheses finish on EOS or at the length cap. The returned hypothesis
/// has the highest total log-probability; ties go to the one that finished
/// first, then to the lexicographically smaller id sequence.
pub fn beam_search(
    params: &ModelParams,
    config: &ModelConfig,
    source_ext: &[usize],
    ext_size: usize,
    beam_size: usize,
) -> Result<DecodeResult, ModelError> {
    let beam_size = beam_size.max(1);
    let enc = encode_eval(params, config, source_ext)?;
    let max_len = config.max_len.limit(source_ext.len());
    let mut live = vec![Hyp {
        tokens: Vec::new(),
        log_prob: 0.0,
        state: DecoderState::initial(&enc),
        attention: Vec::new(),
        switch: Vec::new(),
    }];
    let mut finished: Vec<(Hyp, usize)> = Vec::new();

    for step in 0..max_len {
        let mut outs = Vec::with_capacity(live.len());
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        for (p, hyp) in live.iter().enumerate() {
            let prev = hyp.tokens.last().copied().unwrap_or(BOS);
            let out = decode_step(params, config, prev, &hyp.state, &enc, source_ext, ext_size, None)?;
            for (w, &pw) in out.probs.iter().enumerate() {
                if pw > 0.0 {
                    cands.push((hyp.log_prob + pw.ln(), p, w));
                }
            }
            outs.push(out);
        }
        cands.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then_with(|| live[a.1].tokens.cmp(&live[b.1].tokens))
                .then(a.2.cmp(&b.2))
        });
        cands.truncate(beam_size);

        let mut next = Vec::with_capacity(cands.len());
        for (lp, p, w) in cands {
            let parent = &live[p];
            let out = &outs[p];
            let mut hyp = Hyp {
                tokens: parent.tokens.clone(),
                log_prob: lp,
                state: out.state.clone(),
                attention: parent.attention.clone(),
                switch: parent.switch.clone(),
            };
            hyp.tokens.push(w);
            hyp.attention.push(out.attention.clone());
            hyp.switch.push(out.switch);
            if w == EOS || step + 1 == max_len {
                finished.push((hyp, step));
            } else {
                next.push(hyp);
            }
        }
        live = next;
        if live.is_empty() {
            break;
        }
        // scores only decrease, so no live hypothesis can overtake
        let best_done = finished.iter().map(|(h, _)| h.log_prob).fold(f64::NEG_INFINITY, f64::max);
        let best_live = live.iter().map(|h| h.log_prob).fold(f64::NEG_INFINITY, f64::max);
        if best_done >= best_live {
            break;
        }
    }

    let (best, _) = finished
        .into_iter()
        .min_by(|(a, sa), (b, sb)| {
            b.log_prob
                .partial_cmp(&a.log_prob)
                .unwrap_or(Ordering::Equal)
                .then(sa.cmp(sb))
                .then_with(|| a.tokens.cmp(&b.tokens))
        })
        .unwrap_or_else(|| {
            (
                Hyp {
                    tokens: Vec::new(),
                    log_prob: 0.0,
                    state: DecoderState::initial(&enc),
                    attention: Vec::new(),
                    switch: Vec::new(),
                },
                0,
            )
        });
    Ok(DecodeResult {
        tokens: best.tokens,
        log_prob: best.log_prob,
        attention: best.attention,
        copy_switch: best.switch,
    })
}

/// Argmax decoding, lowest id on ties.
pub fn greedy_decode(params: &ModelParams, config: &ModelConfig, source_ext: &[usize], ext_size: usize) -> Result<DecodeResult, ModelError> {
    let enc = encode_eval(params, config, source_ext)?;
    let max_len = config.max_len.limit(source_ext.len());
    let mut state = DecoderState::initial(&enc);
    let mut res = DecodeResult {
        tokens: Vec::new(),
        log_prob: 0.0,
        attention: Vec::new(),
        copy_switch: Vec::new(),
    };
    let mut prev = BOS;
    for _ in 0..max_len {
        let out = decode_step(params, config, prev, &state, &enc, source_ext, ext_size, None)?;
        let mut best = 0;
        for (w, &p) in out.probs.iter().enumerate() {
            if p > out.probs[best] {
                best = w;
            }
        }
        res.tokens.push(best);
        res.log_prob += out.probs[best].ln();
        res.attention.push(out.attention);
        res.copy_switch.push(out.switch);
        state = out.state;
        prev = best;
        if best == EOS {
            break;
        }
    }
    Ok(res)
}
