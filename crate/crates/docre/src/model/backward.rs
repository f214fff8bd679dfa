//! Exact backpropagation through the classifier, the pooling structure, and
//! the bidirectional recurrence.

use crate::{Error, Result};

use super::forward::{matvec_t_acc, outer_acc};
use super::{EncoderKind, ForwardTrace, GradientAccumulator, ModelState};

/// Accumulates d(loss)/d(theta) into `acc` given `upstream` = d(loss)/d(probs)
/// for the forward pass captured in `trace`. The trace must have been
/// produced by the current state version.
pub fn backward(
    state: &ModelState,
    trace: &ForwardTrace,
    upstream: &[f64],
    acc: &mut GradientAccumulator,
) -> Result<()> {
    if trace.version != state.version() {
        return Err(Error::StaleTrace);
    }
    let cfg = &state.config;
    debug_assert_eq!(upstream.len(), cfg.relation_count);
    let params = state.params();
    let layout = state.layout.clone();
    let grads = acc.grads_mut();

    // Sigmoid with clamp: zero derivative where the output was clamped.
    let dz: Vec<f64> = trace
        .raw_probs
        .iter()
        .zip(&trace.clamped)
        .zip(upstream)
        .map(|((&p, &was_clamped), &u)| if was_clamped { 0.0 } else { u * p * (1.0 - p) })
        .collect();

    let h1_dim = cfg.hidden_dim;
    let rep_dim = cfg.rep_dim();
    let d_in = 3 * rep_dim;

    // Output layer.
    outer_acc(&mut grads[layout.w2.clone()], cfg.relation_count, h1_dim, &dz, &trace.hidden);
    for (g, d) in grads[layout.b2.clone()].iter_mut().zip(&dz) {
        *g += d;
    }
    let mut d_hidden = vec![0.0; h1_dim];
    matvec_t_acc(&params[layout.w2.clone()], cfg.relation_count, h1_dim, &dz, &mut d_hidden);

    // Hidden tanh layer.
    let da1: Vec<f64> = d_hidden
        .iter()
        .zip(&trace.hidden)
        .map(|(&d, &h)| d * (1.0 - h * h))
        .collect();
    outer_acc(&mut grads[layout.w1.clone()], h1_dim, d_in, &da1, &trace.input);
    for (g, d) in grads[layout.b1.clone()].iter_mut().zip(&da1) {
        *g += d;
    }
    let mut d_input = vec![0.0; d_in];
    matvec_t_acc(&params[layout.w1.clone()], h1_dim, d_in, &da1, &mut d_input);

    // Distribute [head; tail; context] gradients back onto token reps.
    let t_len = trace.token_ids.len();
    let mut d_reps = vec![0.0; t_len * rep_dim];
    let spread_entity = |d_reps: &mut [f64], d_ent: &[f64], mentions: &[Vec<usize>]| {
        for positions in mentions {
            let scale = 1.0 / (mentions.len() as f64 * positions.len() as f64);
            for &t in positions {
                for (dr, de) in d_reps[t * rep_dim..(t + 1) * rep_dim].iter_mut().zip(d_ent) {
                    *dr += scale * de;
                }
            }
        }
    };
    spread_entity(&mut d_reps, &d_input[..rep_dim], &trace.head_mentions);
    spread_entity(&mut d_reps, &d_input[rep_dim..2 * rep_dim], &trace.tail_mentions);
    let d_ctx = &d_input[2 * rep_dim..];
    for t in 0..t_len {
        for (dr, dc) in d_reps[t * rep_dim..(t + 1) * rep_dim].iter_mut().zip(d_ctx) {
            *dr += dc / t_len as f64;
        }
    }

    // Encoder.
    let e = cfg.embedding_dim;
    match cfg.encoder_kind {
        EncoderKind::MeanPool => {
            for (t, &id) in trace.token_ids.iter().enumerate() {
                let row = &mut grads[layout.embedding.start + id * e..layout.embedding.start + (id + 1) * e];
                for (g, d) in row.iter_mut().zip(&d_reps[t * rep_dim..(t + 1) * rep_dim]) {
                    *g += d;
                }
            }
        }
        EncoderKind::SimpleBirnn => {
            let h = cfg.hidden_dim;
            let emb = &params[layout.embedding.clone()];
            let mut d_emb_local = vec![0.0; t_len * e];

            // Forward-direction recurrence, unrolled in reverse.
            {
                let (wr, ur, br) = layout.rnn_fwd.clone().expect("birnn layout");
                let mut carry = vec![0.0; h];
                for t in (0..t_len).rev() {
                    let ht = &trace.rnn_fwd_h[t * h..(t + 1) * h];
                    let da: Vec<f64> = (0..h)
                        .map(|k| (d_reps[t * rep_dim + k] + carry[k]) * (1.0 - ht[k] * ht[k]))
                        .collect();
                    let id = trace.token_ids[t];
                    outer_acc(&mut grads[wr.clone()], h, e, &da, &emb[id * e..(id + 1) * e]);
                    if t > 0 {
                        let prev = &trace.rnn_fwd_h[(t - 1) * h..t * h];
                        outer_acc(&mut grads[ur.clone()], h, h, &da, prev);
                    }
                    for (g, d) in grads[br.clone()].iter_mut().zip(&da) {
                        *g += d;
                    }
                    matvec_t_acc(&params[wr.clone()], h, e, &da, &mut d_emb_local[t * e..(t + 1) * e]);
                    let mut new_carry = vec![0.0; h];
                    matvec_t_acc(&params[ur.clone()], h, h, &da, &mut new_carry);
                    carry = new_carry;
                }
            }
            // Backward-direction recurrence, unrolled forwards.
            {
                let (wr, ur, br) = layout.rnn_bwd.clone().expect("birnn layout");
                let mut carry = vec![0.0; h];
                for t in 0..t_len {
                    let ht = &trace.rnn_bwd_h[t * h..(t + 1) * h];
                    let da: Vec<f64> = (0..h)
                        .map(|k| (d_reps[t * rep_dim + h + k] + carry[k]) * (1.0 - ht[k] * ht[k]))
                        .collect();
                    let id = trace.token_ids[t];
                    outer_acc(&mut grads[wr.clone()], h, e, &da, &emb[id * e..(id + 1) * e]);
                    if t + 1 < t_len {
                        let next = &trace.rnn_bwd_h[(t + 1) * h..(t + 2) * h];
                        outer_acc(&mut grads[ur.clone()], h, h, &da, next);
                    }
                    for (g, d) in grads[br.clone()].iter_mut().zip(&da) {
                        *g += d;
                    }
                    matvec_t_acc(&params[wr.clone()], h, e, &da, &mut d_emb_local[t * e..(t + 1) * e]);
                    let mut new_carry = vec![0.0; h];
                    matvec_t_acc(&params[ur.clone()], h, h, &da, &mut new_carry);
                    carry = new_carry;
                }
            }
            for (t, &id) in trace.token_ids.iter().enumerate() {
                let row = &mut grads[layout.embedding.start + id * e..layout.embedding.start + (id + 1) * e];
                for (g, d) in row.iter_mut().zip(&d_emb_local[t * e..(t + 1) * e]) {
                    *g += d;
                }
            }
        }
    }
    Ok(())
}
