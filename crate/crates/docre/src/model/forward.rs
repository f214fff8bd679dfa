//! Forward pass: encoder over surviving tokens, mention/entity/context
//! averaging, two-layer tanh classifier, clamped sigmoid outputs.

use std::cell::Cell;
use std::collections::BTreeMap;

use crate::corpus::DocumentView;
use crate::{Error, Result};

thread_local! {
    static FORWARD_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Number of forward passes executed on this thread; instrumentation for
/// the two-forwards-per-update contract.
pub fn forward_call_count() -> u64 {
    FORWARD_CALLS.with(|c| c.get())
}

pub fn reset_forward_call_count() {
    FORWARD_CALLS.with(|c| c.set(0));
}

use super::{
    clamp_prob, sigmoid, EncoderKind, ForwardTrace, ModelState, PredictionVector,
};

/// y += W x for a row-major (rows x cols) matrix.
pub(crate) fn matvec_acc(w: &[f64], rows: usize, cols: usize, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (wv, xv) in row.iter().zip(x) {
            acc += wv * xv;
        }
        y[r] += acc;
    }
}

/// y += W^T d for a row-major (rows x cols) matrix.
pub(crate) fn matvec_t_acc(w: &[f64], rows: usize, cols: usize, d: &[f64], y: &mut [f64]) {
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let dv = d[r];
        for (yv, wv) in y.iter_mut().zip(row) {
            *yv += dv * wv;
        }
    }
}

/// G += d x^T (outer product accumulation into a rows x cols gradient block).
pub(crate) fn outer_acc(g: &mut [f64], rows: usize, cols: usize, d: &[f64], x: &[f64]) {
    debug_assert_eq!(g.len(), rows * cols);
    for r in 0..rows {
        let dv = d[r];
        if dv == 0.0 {
            continue;
        }
        let row = &mut g[r * cols..(r + 1) * cols];
        for (gv, xv) in row.iter_mut().zip(x) {
            *gv += dv * xv;
        }
    }
}

/// Scores one entity pair on one view. Both pair entities must have at least
/// one surviving mention.
pub fn forward(
    state: &ModelState,
    view: &DocumentView<'_>,
    pair: (usize, usize),
) -> Result<(PredictionVector, ForwardTrace)> {
    FORWARD_CALLS.with(|c| c.set(c.get() + 1));
    let cfg = &state.config;
    let params = state.params();
    let layout = &state.layout;

    // Surviving token sequence, with a map from (sentence, token) to its
    // position so mention spans can be resolved.
    let mut token_ids = Vec::new();
    let mut pos_of: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for sent in view.surviving_sentences() {
        for (k, tok) in sent.tokens.iter().enumerate() {
            pos_of.insert((sent.index, k), token_ids.len());
            token_ids.push(tok.vocab_id);
        }
    }
    let t_len = token_ids.len();
    if t_len == 0 {
        return Err(Error::Precondition("view has no surviving tokens".into()));
    }

    let mention_positions = |entity_id: usize| -> Result<Vec<Vec<usize>>> {
        let mentions = view.surviving_mentions(entity_id);
        if mentions.is_empty() {
            return Err(Error::Precondition(format!(
                "entity {entity_id} has no surviving mention in the view"
            )));
        }
        Ok(mentions
            .iter()
            .map(|m| {
                (m.start..m.end)
                    .map(|k| pos_of[&(m.sentence_index, k)])
                    .collect()
            })
            .collect())
    };
    let head_mentions = mention_positions(pair.0)?;
    let tail_mentions = mention_positions(pair.1)?;

    // Encoder.
    let e = cfg.embedding_dim;
    let rep_dim = cfg.rep_dim();
    let emb = &params[layout.embedding.clone()];
    let mut token_reps = vec![0.0; t_len * rep_dim];
    let mut rnn_fwd_h = Vec::new();
    let mut rnn_bwd_h = Vec::new();
    match cfg.encoder_kind {
        EncoderKind::MeanPool => {
            for (t, &id) in token_ids.iter().enumerate() {
                token_reps[t * rep_dim..(t + 1) * rep_dim]
                    .copy_from_slice(&emb[id * e..(id + 1) * e]);
            }
        }
        EncoderKind::SimpleBirnn => {
            let h = cfg.hidden_dim;
            let (wf, uf, bf) = layout.rnn_fwd.clone().expect("birnn layout");
            let (wb, ub, bb) = layout.rnn_bwd.clone().expect("birnn layout");
            rnn_fwd_h = vec![0.0; t_len * h];
            rnn_bwd_h = vec![0.0; t_len * h];
            let mut prev = vec![0.0; h];
            for (t, &id) in token_ids.iter().enumerate() {
                let mut a = params[bf.clone()].to_vec();
                matvec_acc(&params[wf.clone()], h, e, &emb[id * e..(id + 1) * e], &mut a);
                matvec_acc(&params[uf.clone()], h, h, &prev, &mut a);
                for v in &mut a {
                    *v = v.tanh();
                }
                rnn_fwd_h[t * h..(t + 1) * h].copy_from_slice(&a);
                prev = a;
            }
            let mut next = vec![0.0; h];
            for t in (0..t_len).rev() {
                let id = token_ids[t];
                let mut a = params[bb.clone()].to_vec();
                matvec_acc(&params[wb.clone()], h, e, &emb[id * e..(id + 1) * e], &mut a);
                matvec_acc(&params[ub.clone()], h, h, &next, &mut a);
                for v in &mut a {
                    *v = v.tanh();
                }
                rnn_bwd_h[t * h..(t + 1) * h].copy_from_slice(&a);
                next = a;
            }
            for t in 0..t_len {
                token_reps[t * rep_dim..t * rep_dim + h]
                    .copy_from_slice(&rnn_fwd_h[t * h..(t + 1) * h]);
                token_reps[t * rep_dim + h..(t + 1) * rep_dim]
                    .copy_from_slice(&rnn_bwd_h[t * h..(t + 1) * h]);
            }
        }
    }

    // Entity representation: mean over mentions of the mention's mean token
    // representation. Context: mean over every surviving token.
    let entity_rep = |mentions: &[Vec<usize>]| -> Vec<f64> {
        let mut rep = vec![0.0; rep_dim];
        for positions in mentions {
            let scale = 1.0 / (mentions.len() as f64 * positions.len() as f64);
            for &t in positions {
                for (rv, tv) in rep.iter_mut().zip(&token_reps[t * rep_dim..(t + 1) * rep_dim]) {
                    *rv += scale * tv;
                }
            }
        }
        rep
    };
    let head_rep = entity_rep(&head_mentions);
    let tail_rep = entity_rep(&tail_mentions);
    let mut context = vec![0.0; rep_dim];
    for t in 0..t_len {
        for (cv, tv) in context.iter_mut().zip(&token_reps[t * rep_dim..(t + 1) * rep_dim]) {
            *cv += tv / t_len as f64;
        }
    }

    let mut input = Vec::with_capacity(3 * rep_dim);
    input.extend_from_slice(&head_rep);
    input.extend_from_slice(&tail_rep);
    input.extend_from_slice(&context);

    // Two-layer classifier with tanh hidden layer.
    let d_in = 3 * rep_dim;
    let h1_dim = cfg.hidden_dim;
    let mut hidden = params[layout.b1.clone()].to_vec();
    matvec_acc(&params[layout.w1.clone()], h1_dim, d_in, &input, &mut hidden);
    for v in &mut hidden {
        *v = v.tanh();
    }
    let mut logits = params[layout.b2.clone()].to_vec();
    matvec_acc(
        &params[layout.w2.clone()],
        cfg.relation_count,
        h1_dim,
        &hidden,
        &mut logits,
    );
    let raw_probs: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
    let mut probs = Vec::with_capacity(raw_probs.len());
    let mut clamped = Vec::with_capacity(raw_probs.len());
    for &p in &raw_probs {
        let (cp, was) = clamp_prob(p);
        probs.push(cp);
        clamped.push(was);
    }

    let pred = PredictionVector {
        probs,
        pair,
        doc_id: view.base.doc_id.clone(),
        removed: view.removed.clone(),
    };
    let trace = ForwardTrace {
        version: state.version(),
        token_ids,
        rnn_fwd_h,
        rnn_bwd_h,
        head_mentions,
        tail_mentions,
        input,
        hidden,
        raw_probs,
        clamped,
    };
    Ok((pred, trace))
}
