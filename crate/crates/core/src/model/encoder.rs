//! Lemma and tag encoders.
//!
//! The lemma runs through a single-layer bidirectional recurrent encoder; the
//! per-position states are forward||backward concatenations. Tags go through
//! one layer of single-head scaled dot-product self-attention with no
//! positional encoding, so their representation is order-free.

use crate::autodiff::{Tape, TensorId};
use crate::error::{Error, Result};

use super::cell::lstm_step;
use super::{ModelParams, TapeParams};

fn check_ids(ids: &[usize], limit: usize, what: &str) -> Result<()> {
    if ids.is_empty() {
        return Err(Error::usage(format!("encode: empty {what} sequence")));
    }
    for &id in ids {
        if id >= limit {
            return Err(Error::Vocab(format!(
                "{what} id {id} out of range (< {limit})"
            )));
        }
    }
    Ok(())
}

/// Returns the per-position states (each `2 * state_dim`) and the
/// discriminator input: last forward state || last backward state (or the
/// last forward state alone when `disc_concat` is off).
pub fn encode_lemma(
    tape: &mut Tape,
    tp: &TapeParams,
    model: &ModelParams,
    char_ids: &[usize],
) -> Result<(Vec<TensorId>, TensorId)> {
    check_ids(char_ids, model.char_count, "character")?;
    let kind = model.config.lstm_kind;
    let n = char_ids.len();

    let embedded: Vec<TensorId> = char_ids
        .iter()
        .map(|&id| tape.pick_row(tp.e_char, id))
        .collect::<Result<_>>()?;

    let mut fwd = Vec::with_capacity(n);
    let (mut h, mut c) = (tp.zero_state, tp.zero_state);
    for &x in &embedded {
        let (h2, c2) = lstm_step(tape, &tp.enc_fwd, kind, tp.ones_state, x, h, c)?;
        fwd.push(h2);
        h = h2;
        c = c2;
    }
    let fwd_last = h;

    let mut bwd = vec![tp.zero_state; n];
    let (mut h, mut c) = (tp.zero_state, tp.zero_state);
    for i in (0..n).rev() {
        let (h2, c2) = lstm_step(tape, &tp.enc_bwd, kind, tp.ones_state, embedded[i], h, c)?;
        bwd[i] = h2;
        h = h2;
        c = c2;
    }
    let bwd_last = h;

    let states: Vec<TensorId> = fwd
        .iter()
        .zip(&bwd)
        .map(|(&f, &b)| tape.concat(&[f, b]))
        .collect::<Result<_>>()?;
    let final_state = if model.config.disc_concat {
        tape.concat(&[fwd_last, bwd_last])?
    } else {
        fwd_last
    };
    Ok((states, final_state))
}

/// One self-attention layer over tag embeddings; outputs are `state_dim`
/// vectors, one per tag.
pub fn encode_tags(
    tape: &mut Tape,
    tp: &TapeParams,
    model: &ModelParams,
    tag_ids: &[usize],
) -> Result<Vec<TensorId>> {
    check_ids(tag_ids, model.tag_count, "tag")?;
    let m = tag_ids.len();
    let scale = 1.0 / (model.config.attn_dim as f64).sqrt();

    let mut queries = Vec::with_capacity(m);
    let mut keys = Vec::with_capacity(m);
    let mut values = Vec::with_capacity(m);
    for &id in tag_ids {
        let e = tape.pick_row(tp.e_tag, id)?;
        queries.push(tape.matmul(tp.tag_wq, e)?);
        keys.push(tape.matmul(tp.tag_wk, e)?);
        values.push(tape.matmul(tp.tag_wv, e)?);
    }

    let mut out = Vec::with_capacity(m);
    for &q in &queries {
        let mut scores = Vec::with_capacity(m);
        for &k in &keys {
            let prod = tape.mul(q, k)?;
            let dot = tape.sum(prod)?;
            scores.push(tape.scale(dot, scale)?);
        }
        let score_vec = tape.concat(&scores)?;
        let weights = tape.softmax(score_vec)?;
        let mut acc: Option<TensorId> = None;
        for (j, &v) in values.iter().enumerate() {
            let wj = tape.pick_row(weights, j)?;
            let term = tape.mul(wj, v)?;
            acc = Some(match acc {
                Some(a) => tape.add(a, term)?,
                None => term,
            });
        }
        out.push(acc.expect("m >= 1"));
    }
    Ok(out)
}
