//! Forward pass, sequence NLL, the hand-derived backward pass, and greedy
//! decoding.
//!
//! The backward pass mirrors the forward exactly: softmax-minus-onehot at the
//! logits, `(1 - h^2)` through each tanh, and a scatter-add into the rows of
//! the embedding matrix for every context slot. Loss is the mean over batch
//! examples of total sequence NLL in bits, so the gradient carries a global
//! `1 / (n * ln 2)` factor.

use crate::corpus::Vocab;
use crate::error::{Error, Result};
use crate::model::params::{Gradients, Mat, ModelParams};
use crate::model::ModelConfig;

/// Total and per-scored-token NLL of one sequence, in bits. Entry i covers
/// predicting `tokens[i+1]` from its context.
#[derive(Debug, Clone)]
pub struct SequenceNll {
    pub total_bits: f64,
    pub per_token_bits: Vec<f64>,
}

const LN_2: f64 = std::f64::consts::LN_2;

fn check_tokens(config: &ModelConfig, tokens: &[u32]) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::Model("cannot score an empty sequence".into()));
    }
    for &t in tokens {
        if t as usize >= config.vocab_size {
            return Err(Error::Model(format!(
                "token id {t} out of vocabulary (size {})",
                config.vocab_size
            )));
        }
    }
    Ok(())
}

/// Embeds the window of `context_window` tokens ending just before `pos`,
/// left-padded with the pad token, into `x`.
fn fill_context(config: &ModelConfig, params: &ModelParams, tokens: &[u32], pos: usize, x: &mut [f64]) {
    let w = config.context_window;
    let e = config.embed_dim;
    for slot in 0..w {
        let idx = pos as isize - w as isize + slot as isize;
        let tok = if idx < 0 { config.pad_token as usize } else { tokens[idx as usize] as usize };
        x[slot * e..(slot + 1) * e].copy_from_slice(params.embedding.row(tok));
    }
}

/// out = b + input * W, optionally through tanh. `W` is in_dim x out_dim, so
/// the inner loop runs over the contiguous output row.
fn layer_forward(w: &Mat, b: &[f64], input: &[f64], out: &mut [f64], tanh: bool) {
    out.copy_from_slice(b);
    for (i, &a) in input.iter().enumerate() {
        let row = w.row(i);
        for (o, &x) in out.iter_mut().zip(row) {
            *o += a * x;
        }
    }
    if tanh {
        for o in out.iter_mut() {
            *o = o.tanh();
        }
    }
}

/// Accumulates dW += input (outer) dpre and db += dpre, and writes
/// dinput = W dpre. One fused sweep keeps every inner loop on contiguous rows.
fn layer_backward(
    w: &Mat,
    gw: &mut Mat,
    gb: &mut [f64],
    input: &[f64],
    dpre: &[f64],
    dinput: &mut [f64],
) {
    for (g, &d) in gb.iter_mut().zip(dpre) {
        *g += d;
    }
    for (i, &xi) in input.iter().enumerate() {
        let grow = gw.row_mut(i);
        let wrow = w.row(i);
        let mut acc = 0.0;
        for ((g, &wv), &d) in grow.iter_mut().zip(wrow).zip(dpre) {
            *g += xi * d;
            acc += wv * d;
        }
        dinput[i] = acc;
    }
}

/// Workspace reused across the positions of one scoring or gradient call.
struct Activations {
    x: Vec<f64>,
    hidden: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

impl Activations {
    fn new(config: &ModelConfig) -> Activations {
        Activations {
            x: vec![0.0; config.input_dim()],
            hidden: config.hidden_dims.iter().map(|&d| vec![0.0; d]).collect(),
            logits: vec![0.0; config.vocab_size],
        }
    }
}

fn forward_position(
    config: &ModelConfig,
    params: &ModelParams,
    tokens: &[u32],
    pos: usize,
    act: &mut Activations,
) {
    fill_context(config, params, tokens, pos, &mut act.x);
    let mut input: &[f64] = &act.x;
    for (layer, h) in params.layers.iter().zip(&mut act.hidden) {
        layer_forward(&layer.w, &layer.b, input, h, true);
        input = h;
    }
    layer_forward(&params.out_w, &params.out_b, input, &mut act.logits, false);
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = logits.iter().map(|&l| (l - m).exp()).sum();
    m + s.ln()
}

pub fn sequence_nll(config: &ModelConfig, params: &ModelParams, tokens: &[u32]) -> Result<SequenceNll> {
    check_tokens(config, tokens)?;
    let mut act = Activations::new(config);
    let mut per_token = Vec::with_capacity(tokens.len().saturating_sub(1));
    let mut total = 0.0;
    for pos in 1..tokens.len() {
        forward_position(config, params, tokens, pos, &mut act);
        let lse = log_sum_exp(&act.logits);
        let bits = (lse - act.logits[tokens[pos] as usize]) / LN_2;
        per_token.push(bits);
        total += bits;
    }
    if !total.is_finite() {
        return Err(Error::NonFinite { context: "sequence_nll".into() });
    }
    Ok(SequenceNll { total_bits: total, per_token_bits: per_token })
}

pub fn nll_gradient(
    config: &ModelConfig,
    params: &ModelParams,
    batch: &[&[u32]],
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Model("gradient of an empty batch".into()));
    }
    for tokens in batch {
        check_tokens(config, tokens)?;
    }
    let mut grads = params.zeros_like();
    let mut act = Activations::new(config);
    // d(bits-loss)/dlogit carries 1/ln2 from the bits conversion and 1/n
    // from the batch mean.
    let scale = 1.0 / (batch.len() as f64 * LN_2);
    let mut loss_nats = 0.0;

    let n_layers = params.layers.len();
    let mut dh: Vec<Vec<f64>> = config.hidden_dims.iter().map(|&d| vec![0.0; d]).collect();
    let mut dx = vec![0.0; config.input_dim()];
    let mut dlogits = vec![0.0; config.vocab_size];

    for tokens in batch {
        for pos in 1..tokens.len() {
            forward_position(config, params, tokens, pos, &mut act);
            let lse = log_sum_exp(&act.logits);
            loss_nats += lse - act.logits[tokens[pos] as usize];

            for (d, &l) in dlogits.iter_mut().zip(&act.logits) {
                *d = (l - lse).exp() * scale;
            }
            dlogits[tokens[pos] as usize] -= scale;

            layer_backward(
                &params.out_w,
                &mut grads.out_w,
                &mut grads.out_b,
                &act.hidden[n_layers - 1],
                &dlogits,
                &mut dh[n_layers - 1],
            );

            // Hidden stack, last to first; tanh' = 1 - h^2 folds into dh
            // before each layer's backward sweep.
            for l in (0..n_layers).rev() {
                {
                    let h = &act.hidden[l];
                    let d = &mut dh[l];
                    for (di, &hi) in d.iter_mut().zip(h) {
                        *di *= 1.0 - hi * hi;
                    }
                }
                let layer = &params.layers[l];
                let glayer = &mut grads.layers[l];
                if l == 0 {
                    layer_backward(&layer.w, &mut glayer.w, &mut glayer.b, &act.x, &dh[0], &mut dx);
                } else {
                    let (lo, hi) = dh.split_at_mut(l);
                    layer_backward(
                        &layer.w,
                        &mut glayer.w,
                        &mut glayer.b,
                        &act.hidden[l - 1],
                        &hi[0],
                        &mut lo[l - 1],
                    );
                }
            }

            // Scatter the context gradient back into the embedding rows.
            let w = config.context_window;
            let e = config.embed_dim;
            for slot in 0..w {
                let idx = pos as isize - w as isize + slot as isize;
                let tok =
                    if idx < 0 { config.pad_token as usize } else { tokens[idx as usize] as usize };
                let gr = grads.embedding.row_mut(tok);
                for (g, &d) in gr.iter_mut().zip(&dx[slot * e..(slot + 1) * e]) {
                    *g += d;
                }
            }
        }
    }

    let loss_bits = loss_nats * scale;
    if !loss_bits.is_finite() {
        return Err(Error::NonFinite { context: "nll_gradient loss".into() });
    }
    Ok((loss_bits, grads))
}

pub fn greedy_decode(
    config: &ModelConfig,
    params: &ModelParams,
    prefix: &[u32],
    vocab: &Vocab,
    max_len: usize,
) -> Result<Vec<u32>> {
    check_tokens(config, prefix)?;
    if prefix.last() != Some(&vocab.sep) {
        return Err(Error::Model("greedy_decode prefix must end with the separator".into()));
    }
    let mut seq = prefix.to_vec();
    let mut out = Vec::new();
    let mut act = Activations::new(config);
    while out.len() < max_len {
        forward_position(config, params, &seq, seq.len(), &mut act);
        let mut best = 0usize;
        for (i, &l) in act.logits.iter().enumerate() {
            // Strict > keeps the lowest id on ties.
            if l > act.logits[best] {
                best = i;
            }
        }
        if best as u32 == vocab.eos {
            break;
        }
        seq.push(best as u32);
        out.push(best as u32);
    }
    Ok(out)
}
