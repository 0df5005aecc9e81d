//! Exact gradients by backpropagation through time, plus batched loss and
//! gradient entry points with scheduling-independent reductions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::forward::{forward, Example, ForwardTrace, LstmStep};
use super::linalg::axpy;
use super::params::{LstmParams, ModelConfig, ModelParams};
use super::ModelError;
use crate::corpus::PAD;
use crate::par::Exec;

/// Examples per reduction chunk. Fixed so sums do not depend on thread count.
const CHUNK: usize = 4;

/// Dropout stream for example `index` of a batch drawn under `seed`.
pub fn example_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Returns `(dx, dh_prev, dc_prev)` and accumulates weight gradients.
fn lstm_backward(p: &LstmParams, step: &LstmStep, dh: &[f64], dc_next: &[f64], g: &mut LstmParams) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hs = dh.len();
    let gt = &step.gates;
    let mut dpre = vec![0.0; 4 * hs];
    let mut dc_prev = vec![0.0; hs];
    for j in 0..hs {
        let (i, f, gg, o) = (gt[j], gt[hs + j], gt[2 * hs + j], gt[3 * hs + j]);
        let tc = step.tanh_c[j];
        let dc = dc_next[j] + dh[j] * o * (1.0 - tc * tc);
        let d_o = dh[j] * tc;
        let d_i = dc * gg;
        let d_g = dc * i;
        let d_f = dc * step.c_prev[j];
        dc_prev[j] = dc * f;
        dpre[j] = d_i * i * (1.0 - i);
        dpre[hs + j] = d_f * f * (1.0 - f);
        dpre[2 * hs + j] = d_g * (1.0 - gg * gg);
        dpre[3 * hs + j] = d_o * o * (1.0 - o);
    }
    g.w_input.add_outer(&dpre, &step.x);
    g.w_hidden.add_outer(&dpre, &step.h_prev);
    axpy(1.0, &dpre, &mut g.bias);
    let mut dx = vec![0.0; step.x.len()];
    p.w_input.matvec_t_acc(&dpre, &mut dx);
    let mut dh_prev = vec![0.0; hs];
    p.w_hidden.matvec_t_acc(&dpre, &mut dh_prev);
    (dx, dh_prev, dc_prev)
}

fn masked(d: &[f64], mask: Option<&Vec<f64>>) -> Vec<f64> {
    match mask {
        Some(m) => d.iter().zip(m).map(|(a, b)| a * b).collect(),
        None => d.to_vec(),
    }
}

/// Accumulates `scale * ∇(-Σ ln p(gold))` into `grads`.
fn backward(params: &ModelParams, config: &ModelConfig, ex: &Example, tr: &ForwardTrace, scale: f64, grads: &mut ModelParams) {
    let h = config.hidden_size;
    let v = config.vocab_size;
    let n_src = ex.source.len();
    let mut d_states = vec![vec![0.0; h]; n_src];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dfeed = vec![0.0; h];

    for (t, st) in tr.steps.iter().enumerate().rev() {
        let y = ex.target[t];
        let dgold = -scale / tr.gold[t];
        let z = st.switch;
        let ps = if y < v { st.p_softmax[y] } else { 0.0 };

        let mut dout = vec![0.0; h];
        let mut dctx = vec![0.0; h];
        let mut dalpha = vec![0.0; n_src];

        // mixture
        let dps = dgold * (1.0 - z);
        if config.copy {
            let dz = dgold * (tr.copy_mass[t] - ps);
            for (i, &s) in ex.source.iter().enumerate() {
                if s == y {
                    dalpha[i] += dgold * z;
                }
            }
            let dpre = dz * z * (1.0 - z);
            let w = &params.switch;
            let emb = params.embedding.row(st.emb_row);
            {
                let gs = &mut grads.switch;
                axpy(dpre, &st.out, &mut gs[..h]);
                axpy(dpre, &st.attn.context, &mut gs[h..2 * h]);
                axpy(dpre, emb, &mut gs[2 * h..]);
            }
            grads.switch_bias[0] += dpre;
            axpy(dpre, &w[..h], &mut dout);
            axpy(dpre, &w[h..2 * h], &mut dctx);
            axpy(dpre, &w[2 * h..], grads.embedding.row_mut(st.emb_row));
        }

        // softmax over the vocabulary
        let mut dattentional = std::mem::take(&mut dfeed);
        if y < v {
            let a = dps * ps;
            let mut dlogits: Vec<f64> = st.p_softmax.iter().map(|p| -a * p).collect();
            dlogits[y] += a;
            grads.output.add_outer(&dlogits, &st.attentional);
            axpy(1.0, &dlogits, &mut grads.output_bias);
            params.output.matvec_t_acc(&dlogits, &mut dattentional);
        }

        // attentional vector tanh(W_c [out; ctx] + b)
        let da: Vec<f64> = dattentional
            .iter()
            .zip(&st.attentional)
            .map(|(d, a)| d * (1.0 - a * a))
            .collect();
        let mut joint = st.out.clone();
        joint.extend_from_slice(&st.attn.context);
        grads.combine.add_outer(&da, &joint);
        axpy(1.0, &da, &mut grads.combine_bias);
        let mut djoint = vec![0.0; 2 * h];
        params.combine.matvec_t_acc(&da, &mut djoint);
        axpy(1.0, &djoint[..h], &mut dout);
        axpy(1.0, &djoint[h..], &mut dctx);

        // context = Σ α_i s_i
        let alpha = &st.attn.weights;
        for i in 0..n_src {
            dalpha[i] += super::linalg::dot(&dctx, &tr.enc.states[i]);
            axpy(alpha[i], &dctx, &mut d_states[i]);
        }
        let mean: f64 = alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
        let mut dquery_pre = vec![0.0; h];
        for i in 0..n_src {
            let dscore = alpha[i] * (dalpha[i] - mean);
            if dscore == 0.0 {
                continue;
            }
            let u = &st.attn.hidden[i];
            axpy(dscore, u, &mut grads.attn_score);
            let dpre: Vec<f64> = u
                .iter()
                .zip(&params.attn_score)
                .map(|(u, w)| dscore * w * (1.0 - u * u))
                .collect();
            axpy(1.0, &dpre, &mut dquery_pre);
            grads.attn_key.add_outer(&dpre, &tr.enc.states[i]);
            params.attn_key.matvec_t_acc(&dpre, &mut d_states[i]);
        }
        grads.attn_query.add_outer(&dquery_pre, &st.out);
        params.attn_query.matvec_t_acc(&dquery_pre, &mut dout);

        // dropout then LSTM
        let mut dh = masked(&dout, st.mask.as_ref());
        axpy(1.0, &dh_next, &mut dh);
        let (dx, dh_prev, dc_prev) = lstm_backward(&params.decoder, &st.lstm, &dh, &dc_next, &mut grads.decoder);
        axpy(1.0, &dx[..h], grads.embedding.row_mut(st.emb_row));
        dfeed = dx[h..].to_vec();
        dh_next = dh_prev;
        dc_next = dc_prev;
    }

    // encoder: decoder initial state is the encoder final state
    let enc = &tr.enc;
    for (i, step) in enc.steps.iter().enumerate().rev() {
        let mut dh = masked(&d_states[i], enc.masks.as_ref().map(|m| &m[i]));
        axpy(1.0, &dh_next, &mut dh);
        let (dx, dh_prev, dc_prev) = lstm_backward(&params.encoder, step, &dh, &dc_next, &mut grads.encoder);
        axpy(1.0, &dx, grads.embedding.row_mut(enc.inputs[i]));
        dh_next = dh_prev;
        dc_next = dc_prev;
    }
}

fn token_count(batch: &[Example]) -> usize {
    batch.iter().map(|e| e.target.len()).sum()
}

/// Mean per-token NLL over a batch in training mode, using the same dropout
/// streams as [`param_gradients`] for the same seed.
pub fn batch_loss(params: &ModelParams, config: &ModelConfig, batch: &[Example], seed: u64) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for (i, ex) in batch.iter().enumerate() {
        let mut rng = example_rng(seed, i);
        let tr = forward(params, config, ex, Some(&mut rng))?;
        total -= tr.gold.iter().map(|p| p.ln()).sum::<f64>();
    }
    Ok(total / token_count(batch).max(1) as f64)
}

pub fn param_gradients(params: &ModelParams, config: &ModelConfig, batch: &[Example], seed: u64) -> Result<(f64, ModelParams), ModelError> {
    param_gradients_with(Exec::default(), params, config, batch, seed)
}

/// Gradient of the mean per-token NLL over the batch, with the loss itself.
/// Examples are processed in fixed chunks and the partial sums reduced in
/// order, so the result is identical for any executor.
pub fn param_gradients_with(
    exec: Exec,
    params: &ModelParams,
    config: &ModelConfig,
    batch: &[Example],
    seed: u64,
) -> Result<(f64, ModelParams), ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let scale = 1.0 / token_count(batch).max(1) as f64;
    let partials = exec.map_chunks(batch, CHUNK, |start, chunk| -> Result<(f64, ModelParams), ModelError> {
        let mut g = ModelParams::zeros(config);
        let mut loss = 0.0;
        for (k, ex) in chunk.iter().enumerate() {
            let mut rng = example_rng(seed, start + k);
            let tr = forward(params, config, ex, Some(&mut rng))?;
            loss -= tr.gold.iter().map(|p| p.ln()).sum::<f64>();
            backward(params, config, ex, &tr, scale, &mut g);
        }
        Ok((loss, g))
    });
    let mut total_loss = 0.0;
    let mut grads: Option<ModelParams> = None;
    for part in partials {
        let (l, g) = part?;
        total_loss += l;
        match grads.as_mut() {
            Some(acc) => acc.add_scaled(&g, 1.0),
            None => grads = Some(g),
        }
    }
    let mut grads = grads.expect("non-empty batch");
    grads.embedding.row_mut(PAD).fill(0.0);
    let loss = total_loss * scale;
    if !loss.is_finite() || !grads.is_finite() {
        return Err(ModelError::NonFiniteLoss);
    }
    Ok((loss, grads))
}
