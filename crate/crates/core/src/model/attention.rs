//! Additive attention with an optional Markov feature.
//!
//! `score(j) = v . tanh([W_s q ; W_h h_j] + m . window(prev, j))`, weights by
//! softmax over the scores, context as the weight-expanded sum of the raw
//! states. The Markov term feeds the previous step's weight at j-1, j, j+1
//! (zero-padded) through a learned 3-vector and is added, as a scalar, to
//! every coordinate of the pre-tanh concatenation; it is present only when
//! the caller supplies previous weights.

use crate::autodiff::{Tape, TensorId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AttnIds {
    pub ws: TensorId,
    pub wh: TensorId,
    pub v: TensorId,
    pub markov: Option<TensorId>,
}

/// Key projections `W_h h_j`, computed once per example and reused across
/// decoder steps.
pub fn project_keys(tape: &mut Tape, attn: &AttnIds, states: &[TensorId]) -> Result<Vec<TensorId>> {
    states.iter().map(|&s| tape.matmul(attn.wh, s)).collect()
}

/// Returns `(context, weights)`.
pub fn attend(
    tape: &mut Tape,
    attn: &AttnIds,
    query: TensorId,
    states: &[TensorId],
    keys: &[TensorId],
    prev_weights: Option<TensorId>,
) -> Result<(TensorId, TensorId)> {
    if states.is_empty() {
        return Err(Error::usage("attend: no states"));
    }
    if states.len() != keys.len() {
        return Err(Error::Shape {
            op: "attend",
            detail: format!("{} states vs {} keys", states.len(), keys.len()),
        });
    }
    if let Some(prev) = prev_weights {
        if tape.values(prev).len() != states.len() {
            return Err(Error::Shape {
                op: "attend",
                detail: format!(
                    "previous weights length {} vs {} states",
                    tape.values(prev).len(),
                    states.len()
                ),
            });
        }
    }
    let j_count = states.len();
    let q_proj = tape.matmul(attn.ws, query)?;
    let mut scores = Vec::with_capacity(j_count);
    for (j, &key) in keys.iter().enumerate() {
        let mut z = tape.concat(&[q_proj, key])?;
        if let (Some(markov), Some(prev)) = (attn.markov, prev_weights) {
            let win = window3(tape, prev, j, j_count)?;
            let prod = tape.mul(markov, win)?;
            let bias = tape.sum(prod)?;
            z = tape.add(z, bias)?;
        }
        let t = tape.tanh(z)?;
        let vt = tape.mul(attn.v, t)?;
        scores.push(tape.sum(vt)?);
    }
    let score_vec = tape.concat(&scores)?;
    let weights = tape.softmax(score_vec)?;
    let mut context: Option<TensorId> = None;
    for (j, &state) in states.iter().enumerate() {
        let wj = tape.pick_row(weights, j)?;
        let term = tape.mul(wj, state)?;
        context = Some(match context {
            Some(acc) => tape.add(acc, term)?,
            None => term,
        });
    }
    Ok((context.expect("states non-empty"), weights))
}

/// `(prev[j-1], prev[j], prev[j+1])` with zero padding at the edges.
fn window3(tape: &mut Tape, prev: TensorId, j: usize, len: usize) -> Result<TensorId> {
    let zero = tape.scalar(0.0);
    let left = if j > 0 {
        tape.pick_row(prev, j - 1)?
    } else {
        zero
    };
    let mid = tape.pick_row(prev, j)?;
    let right = if j + 1 < len {
        tape.pick_row(prev, j + 1)?
    } else {
        zero
    };
    tape.concat(&[left, mid, right])
}
