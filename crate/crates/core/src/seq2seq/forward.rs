//! Forward computation: encoder, additive attention, the copy-augmented
//! decoder step, and teacher-forced sequence likelihood.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::linalg::{dot, sigmoid, softmax};
use super::params::{LstmParams, ModelConfig, ModelParams};
use super::ModelError;
use crate::corpus::{BOS, UNK};

/// Cached activations of one LSTM step.
#[derive(Debug, Clone)]
pub(crate) struct LstmStep {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Gate activations `[i; f; g; o]`.
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

pub(crate) fn lstm_step(p: &LstmParams, x: Vec<f64>, h_prev: &[f64], c_prev: &[f64]) -> LstmStep {
    let hs = h_prev.len();
    let mut gates = p.bias.clone();
    p.w_input.matvec_acc(&x, &mut gates);
    p.w_hidden.matvec_acc(h_prev, &mut gates);
    for (k, a) in gates.iter_mut().enumerate() {
        *a = if k / hs == 2 { a.tanh() } else { sigmoid(*a) };
    }
    let mut c = vec![0.0; hs];
    let mut tanh_c = vec![0.0; hs];
    let mut h = vec![0.0; hs];
    for j in 0..hs {
        let (i, f, g, o) = (gates[j], gates[hs + j], gates[2 * hs + j], gates[3 * hs + j]);
        c[j] = f * c_prev[j] + i * g;
        tanh_c[j] = c[j].tanh();
        h[j] = o * tanh_c[j];
    }
    LstmStep {
        x,
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        gates,
        c,
        tanh_c,
        h,
    }
}

/// Inverted dropout mask: each unit kept with probability `1 - rate` and
/// scaled by `1 / (1 - rate)`.
pub(crate) fn dropout_mask(rng: &mut ChaCha8Rng, len: usize, rate: f64) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

fn apply_mask(h: &[f64], mask: Option<&Vec<f64>>) -> Vec<f64> {
    match mask {
        Some(m) => h.iter().zip(m).map(|(a, b)| a * b).collect(),
        None => h.to_vec(),
    }
}

/// Encoder output for one source sentence.
#[derive(Debug, Clone)]
pub struct Encoded {
    /// Per-position outputs (after dropout in training mode), `[T_in][H]`.
    pub states: Vec<Vec<f64>>,
    /// `U_a s_i` for every position, reused by every decoder step.
    pub(crate) keys: Vec<Vec<f64>>,
    pub final_h: Vec<f64>,
    pub final_c: Vec<f64>,
    pub(crate) steps: Vec<LstmStep>,
    pub(crate) masks: Option<Vec<Vec<f64>>>,
    pub(crate) inputs: Vec<usize>,
}

/// Runs the single-layer encoder LSTM. `dropout_rng` selects training mode:
/// `Some` draws output dropout masks from it, `None` is deterministic and
/// consumes no randomness.
pub fn encode_source(
    params: &ModelParams,
    config: &ModelConfig,
    source_ids: &[usize],
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<Encoded, ModelError> {
    if source_ids.is_empty() {
        return Err(ModelError::EmptySource);
    }
    if let Some(&bad) = source_ids.iter().find(|&&i| i >= config.vocab_size) {
        return Err(ModelError::IdOutOfRange {
            id: bad,
            limit: config.vocab_size,
        });
    }
    let h = config.hidden_size;
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    let mut steps = Vec::with_capacity(source_ids.len());
    let mut states = Vec::with_capacity(source_ids.len());
    let mut masks = dropout_rng.as_ref().map(|_| Vec::with_capacity(source_ids.len()));
    for &id in source_ids {
        let step = lstm_step(&params.encoder, params.embedding.row(id).to_vec(), &h_prev, &c_prev);
        h_prev.clone_from(&step.h);
        c_prev.clone_from(&step.c);
        let mask = match (dropout_rng.as_deref_mut(), config.dropout > 0.0) {
            (Some(rng), true) => Some(dropout_mask(rng, h, config.dropout)),
            _ => None,
        };
        states.push(apply_mask(&step.h, mask.as_ref()));
        if let (Some(ms), Some(m)) = (masks.as_mut(), mask) {
            ms.push(m);
        }
        steps.push(step);
    }
    let masks = masks.filter(|m| !m.is_empty());
    let keys = states.iter().map(|s| params.attn_key.matvec(s)).collect();
    Ok(Encoded {
        states,
        keys,
        final_h: h_prev,
        final_c: c_prev,
        steps,
        masks,
        inputs: source_ids.to_vec(),
    })
}

#[derive(Debug, Clone)]
pub(crate) struct AttnTrace {
    /// `tanh(W_a q + U_a s_i)` per source position.
    pub hidden: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub context: Vec<f64>,
}

pub(crate) fn attend_keys(params: &ModelParams, query: &[f64], states: &[Vec<f64>], keys: &[Vec<f64>]) -> AttnTrace {
    let q = params.attn_query.matvec(query);
    let hidden: Vec<Vec<f64>> = keys
        .iter()
        .map(|k| k.iter().zip(&q).map(|(a, b)| (a + b).tanh()).collect())
        .collect();
    let scores: Vec<f64> = hidden.iter().map(|u| dot(u, &params.attn_score)).collect();
    let weights = softmax(&scores);
    let mut context = vec![0.0; query.len()];
    for (w, s) in weights.iter().zip(states) {
        super::linalg::axpy(*w, s, &mut context);
    }
    AttnTrace {
        hidden,
        weights,
        context,
    }
}

/// Additive attention: `score_i = v · tanh(W_a h + U_a s_i)`, softmax over
/// positions, context is the weighted sum of encoder states.
pub fn attend(params: &ModelParams, query: &[f64], encoder_states: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    assert!(!encoder_states.is_empty(), "attention over an empty source");
    let keys: Vec<Vec<f64>> = encoder_states.iter().map(|s| params.attn_key.matvec(s)).collect();
    let t = attend_keys(params, query, encoder_states, &keys);
    (t.context, t.weights)
}

/// Recurrent decoder state carried between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    /// Previous attentional vector, fed back as input.
    pub feed: Vec<f64>,
}

impl DecoderState {
    /// Encoder final state with a zero attentional vector.
    pub fn initial(enc: &Encoded) -> Self {
        Self {
            h: enc.final_h.clone(),
            c: enc.final_c.clone(),
            feed: vec![0.0; enc.final_h.len()],
        }
    }
}

/// Cached activations of one decoder step.
#[derive(Debug, Clone)]
pub(crate) struct StepTrace {
    pub emb_row: usize,
    pub lstm: LstmStep,
    pub mask: Option<Vec<f64>>,
    /// Decoder output after dropout.
    pub out: Vec<f64>,
    pub attn: AttnTrace,
    pub attentional: Vec<f64>,
    pub p_softmax: Vec<f64>,
    pub switch: f64,
}

/// One decoder step, keeping every activation the backward pass needs.
/// Extended previous ids embed as UNK.
pub(crate) fn step_forward(
    params: &ModelParams,
    config: &ModelConfig,
    prev: usize,
    state: &DecoderState,
    enc: &Encoded,
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> StepTrace {
    let emb_row = if prev >= config.vocab_size { UNK } else { prev };
    let mut x = params.embedding.row(emb_row).to_vec();
    x.extend_from_slice(&state.feed);
    let lstm = lstm_step(&params.decoder, x, &state.h, &state.c);
    let mask = match dropout_rng {
        Some(rng) if config.dropout > 0.0 => Some(dropout_mask(rng, config.hidden_size, config.dropout)),
        _ => None,
    };
    let out = apply_mask(&lstm.h, mask.as_ref());
    let attn = attend_keys(params, &out, &enc.states, &enc.keys);

    let mut joint = out.clone();
    joint.extend_from_slice(&attn.context);
    let mut attentional = params.combine_bias.clone();
    params.combine.matvec_acc(&joint, &mut attentional);
    attentional.iter_mut().for_each(|a| *a = a.tanh());

    let mut logits = params.output_bias.clone();
    params.output.matvec_acc(&attentional, &mut logits);
    let p_softmax = softmax(&logits);

    let switch = if config.copy {
        let h = config.hidden_size;
        let w = &params.switch;
        let pre = dot(&w[..h], &out)
            + dot(&w[h..2 * h], &attn.context)
            + dot(&w[2 * h..], params.embedding.row(emb_row))
            + params.switch_bias[0];
        sigmoid(pre)
    } else {
        0.0
    };
    StepTrace {
        emb_row,
        lstm,
        mask,
        out,
        attn,
        attentional,
        p_softmax,
        switch,
    }
}

/// One decoder step's results.
#[derive(Debug, Clone)]
pub struct StepOutput {
    /// `p(w)` over the vocabulary followed by the example's extended ids.
    pub probs: Vec<f64>,
    pub state: DecoderState,
    pub attention: Vec<f64>,
    /// Copy-switch probability `p(z=1)`.
    pub switch: f64,
    pub p_softmax: Vec<f64>,
}

/// Mixes the generation and copy distributions:
/// `p(w) = p(z) * p_copy(w) + (1 - p(z)) * p_softmax(w)`, where `p_copy`
/// sums attention weights over source positions holding `w` and
/// `p_softmax` is zero on extended ids.
pub fn mix_distribution(p_softmax: &[f64], attention: &[f64], source_ext: &[usize], switch: f64, ext_size: usize) -> Vec<f64> {
    let v = p_softmax.len();
    let mut probs = Vec::with_capacity(v + ext_size);
    probs.extend(p_softmax.iter().map(|p| (1.0 - switch) * p));
    probs.resize(v + ext_size, 0.0);
    if switch > 0.0 {
        for (&id, &a) in source_ext.iter().zip(attention) {
            probs[id] += switch * a;
        }
    }
    probs
}

/// Single decoder step with input feeding. `source_ext` holds the extended
/// ids of the source (vocabulary ids, or ids ≥ V for source-only words).
#[allow(clippy::too_many_arguments)]
pub fn decode_step(
    params: &ModelParams,
    config: &ModelConfig,
    prev: usize,
    state: &DecoderState,
    enc: &Encoded,
    source_ext: &[usize],
    ext_size: usize,
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<StepOutput, ModelError> {
    let limit = config.vocab_size + ext_size;
    if prev >= limit {
        return Err(ModelError::IdOutOfRange { id: prev, limit });
    }
    if let Some(&bad) = source_ext.iter().find(|&&i| i >= limit) {
        return Err(ModelError::IdOutOfRange { id: bad, limit });
    }
    let t = step_forward(params, config, prev, state, enc, dropout_rng);
    let probs = mix_distribution(&t.p_softmax, &t.attn.weights, source_ext, t.switch, ext_size);
    Ok(StepOutput {
        probs,
        state: DecoderState {
            h: t.lstm.h,
            c: t.lstm.c,
            feed: t.attentional,
        },
        attention: t.attn.weights,
        switch: t.switch,
        p_softmax: t.p_softmax,
    })
}

/// A numericalized training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// Extended ids of the source.
    pub source: Vec<usize>,
    /// Extended ids of the target, terminated by EOS.
    pub target: Vec<usize>,
    pub ext_size: usize,
}

impl Example {
    /// Encoder inputs: extended ids embed as UNK.
    pub fn encoder_inputs(&self, vocab_size: usize) -> Vec<usize> {
        self.source
            .iter()
            .map(|&i| if i >= vocab_size { UNK } else { i })
            .collect()
    }
}

pub(crate) struct ForwardTrace {
    pub enc: Encoded,
    pub steps: Vec<StepTrace>,
    pub gold: Vec<f64>,
    /// Copy mass on the gold token at each step.
    pub copy_mass: Vec<f64>,
}

pub(crate) fn forward(
    params: &ModelParams,
    config: &ModelConfig,
    ex: &Example,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<ForwardTrace, ModelError> {
    let limit = config.vocab_size + ex.ext_size;
    if let Some(&bad) = ex.target.iter().chain(&ex.source).find(|&&i| i >= limit) {
        return Err(ModelError::IdOutOfRange { id: bad, limit });
    }
    let enc = encode_source(params, config, &ex.encoder_inputs(config.vocab_size), dropout_rng.as_deref_mut())?;
    let mut state = DecoderState::initial(&enc);
    let mut prev = BOS;
    let mut steps = Vec::with_capacity(ex.target.len());
    let mut gold = Vec::with_capacity(ex.target.len());
    let mut copy_mass = Vec::with_capacity(ex.target.len());
    for &y in &ex.target {
        let t = step_forward(params, config, prev, &state, &enc, dropout_rng.as_deref_mut());
        let pc: f64 = ex
            .source
            .iter()
            .zip(&t.attn.weights)
            .filter(|(&s, _)| s == y)
            .map(|(_, &a)| a)
            .sum();
        let ps = if y < config.vocab_size { t.p_softmax[y] } else { 0.0 };
        gold.push(t.switch * pc + (1.0 - t.switch) * ps);
        copy_mass.push(pc);
        state = DecoderState {
            h: t.lstm.h.clone(),
            c: t.lstm.c.clone(),
            feed: t.attentional.clone(),
        };
        steps.push(t);
        prev = y;
    }
    Ok(ForwardTrace {
        enc,
        steps,
        gold,
        copy_mass,
    })
}

/// Teacher-forced negative log-likelihood `-Σ_t ln p(y_t)` and the per-step
/// gold probabilities.
pub fn sequence_nll(
    params: &ModelParams,
    config: &ModelConfig,
    ex: &Example,
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, Vec<f64>), ModelError> {
    let trace = forward(params, config, ex, dropout_rng)?;
    let loss = -trace.gold.iter().map(|p| p.ln()).sum::<f64>();
    Ok((loss, trace.gold))
}
