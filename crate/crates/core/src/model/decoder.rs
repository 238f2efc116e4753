//! Decoder: two-step attention per output character, training loss, greedy
//! (ensemble) decoding, and the coverage regularizer.
//!
//! Step order: (1) attend over tag states with the previous recurrent state;
//! (2) add the tag context to form the tag-informed state; (3) attend over
//! lemma states with the tag-informed state, with the Markov feature fed the
//! previous lemma-attention weights; (4) update the recurrent cell on
//! [lemma context ; previous output char embedding]; (5) project and softmax.

use crate::autodiff::{Tape, TensorId};
use crate::corpus::{self, Vocabulary};
use crate::error::{Error, Result};
use crate::rng::Rng;

use super::attention::{attend, project_keys};
use super::cell::lstm_step;
use super::discriminator::discriminate_language;
use super::encoder::{encode_lemma, encode_tags};
use super::{ModelParams, TapeParams};

#[derive(Debug, Clone, Copy)]
pub struct DecoderState {
    /// Recurrent state s'.
    pub h: TensorId,
    /// Cell state.
    pub c: TensorId,
    /// Previous lemma-attention weights (Markov feature input).
    pub alpha_x: Option<TensorId>,
    /// Previous output character id (BOS at the start).
    pub y_prev: usize,
}

impl DecoderState {
    pub fn fresh(tp: &TapeParams) -> DecoderState {
        DecoderState {
            h: tp.s0,
            c: tp.zero_state,
            alpha_x: None,
            y_prev: corpus::BOS,
        }
    }
}

/// One decoder step. Returns the output distribution, the new state, and the
/// two attention-weight vectors of this step.
#[allow(clippy::too_many_arguments)]
pub fn decoder_step(
    tape: &mut Tape,
    tp: &TapeParams,
    model: &ModelParams,
    st: &DecoderState,
    h_t: &[TensorId],
    keys_t: &[TensorId],
    h_x: &[TensorId],
    keys_x: &[TensorId],
) -> Result<(TensorId, DecoderState, TensorId, TensorId)> {
    let (c_t, alpha_t) = attend(tape, &tp.attn_t, st.h, h_t, keys_t, None)?;
    let s_informed = tape.add(st.h, c_t)?;
    let (c_x, alpha_x) = attend(tape, &tp.attn_x, s_informed, h_x, keys_x, st.alpha_x)?;
    let y_emb = tape.pick_row(tp.e_char, st.y_prev)?;
    let input = tape.concat(&[c_x, y_emb])?;
    // the recurrent update starts from the tag-informed state: this is the
    // channel that lets the tag set steer which character comes out
    let (h_new, c_new) = lstm_step(
        tape,
        &tp.dec,
        model.config.lstm_kind,
        tp.ones_state,
        input,
        s_informed,
        st.c,
    )?;
    let logits = tape.matmul(tp.w_out, h_new)?;
    let probs = tape.softmax(logits)?;
    let new_state = DecoderState {
        h: h_new,
        c: c_new,
        alpha_x: Some(alpha_x),
        y_prev: st.y_prev,
    };
    Ok((probs, new_state, alpha_t, alpha_x))
}

/// `lambda * || column_sums(weights) - 1 ||_2` over a K x J matrix whose rows
/// are attention distributions. Plain-value version for evaluation and tests.
pub fn coverage_penalty(weights: &[Vec<f64>], lambda: f64) -> f64 {
    if weights.is_empty() {
        return 0.0;
    }
    let j = weights[0].len();
    let mut sums = vec![0.0; j];
    for row in weights {
        for (s, w) in sums.iter_mut().zip(row) {
            *s += w;
        }
    }
    let sq: f64 = sums.iter().map(|s| (s - 1.0) * (s - 1.0)).sum();
    lambda * sq.sqrt()
}

/// Same penalty as a tape node so it can join the training loss.
pub fn coverage_penalty_graph(
    tape: &mut Tape,
    alpha_rows: &[TensorId],
    lambda: f64,
) -> Result<TensorId> {
    let col_sums = tape.add_all(alpha_rows)?;
    let j = tape.values(col_sums).len();
    let neg_ones = tape.leaf(vec![-1.0; j], &[j]);
    let diff = tape.add(col_sums, neg_ones)?;
    let norm = tape.l2_norm(diff)?;
    tape.scale(norm, lambda)
}

/// An example encoded for the model: raw ids, no BOS/EOS framing (the loss
/// and decoder add EOS/BOS where needed).
#[derive(Debug, Clone)]
pub struct EncodedExample {
    pub lemma_ids: Vec<usize>,
    pub tag_ids: Vec<usize>,
    /// Target form ids; EOS is appended internally.
    pub form_ids: Vec<usize>,
    pub lang_id: usize,
}

impl EncodedExample {
    pub fn from_example(e: &corpus::Example, vocab: &Vocabulary) -> Result<EncodedExample> {
        let form = e
            .form
            .as_ref()
            .ok_or_else(|| Error::usage("encode: example has no form"))?;
        Ok(EncodedExample {
            lemma_ids: vocab.encode_chars(&e.lemma),
            tag_ids: vocab.encode_tags(&e.tags)?,
            form_ids: vocab.encode_chars(form),
            lang_id: vocab.lang_id(&e.language)?,
        })
    }
}

/// Loss weights and switches for one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct LossWeights {
    pub coverage_lambda: f64,
    pub adv_weight: f64,
    pub discriminator: bool,
}

#[derive(Debug)]
pub struct LossOutput {
    /// Total loss node (NLL + coverage penalties + weighted adversarial
    /// loss).
    pub loss: TensorId,
    /// Plain NLL value of this example.
    pub nll: f64,
    pub alpha_t: Vec<Vec<f64>>,
    pub alpha_x: Vec<Vec<f64>>,
}

/// Full training loss of one example. With `teacher_forcing_prob < 1`, each
/// next-step input is the gold character with that probability and the greedy
/// argmax of the current distribution otherwise (scheduled sampling); the
/// loss itself is always measured against gold.
#[allow(clippy::too_many_arguments)]
pub fn forward_loss(
    tape: &mut Tape,
    tp: &TapeParams,
    model: &ModelParams,
    ex: &EncodedExample,
    weights: &LossWeights,
    teacher_forcing_prob: f64,
    rng: &mut Rng,
) -> Result<LossOutput> {
    let (h_x, h_final) = encode_lemma(tape, tp, model, &ex.lemma_ids)?;
    let h_t = encode_tags(tape, tp, model, &ex.tag_ids)?;
    let keys_t = project_keys(tape, &tp.attn_t, &h_t)?;
    let keys_x = project_keys(tape, &tp.attn_x, &h_x)?;

    let mut targets = ex.form_ids.clone();
    targets.push(corpus::EOS);

    let mut st = DecoderState::fresh(tp);
    let mut step_losses = Vec::with_capacity(targets.len());
    let mut alpha_t_rows = Vec::with_capacity(targets.len());
    let mut alpha_x_rows = Vec::with_capacity(targets.len());
    let mut nll = 0.0;
    for (k, &gold) in targets.iter().enumerate() {
        let (probs, mut new_st, a_t, a_x) =
            decoder_step(tape, tp, model, &st, &h_t, &keys_t, &h_x, &keys_x)?;
        let step_loss = tape.logloss(probs, gold)?;
        nll += tape.values(step_loss)[0];
        step_losses.push(step_loss);
        alpha_t_rows.push(a_t);
        alpha_x_rows.push(a_x);
        if k + 1 < targets.len() {
            let feed_gold = teacher_forcing_prob >= 1.0 || rng.bernoulli(teacher_forcing_prob);
            new_st.y_prev = if feed_gold {
                gold
            } else {
                argmax(tape.values(probs))
            };
        }
        st = new_st;
    }

    let nll_node = tape.add_all(&step_losses)?;
    let pen_t = coverage_penalty_graph(tape, &alpha_t_rows, weights.coverage_lambda)?;
    let pen_x = coverage_penalty_graph(tape, &alpha_x_rows, weights.coverage_lambda)?;
    let mut loss = tape.add(nll_node, pen_t)?;
    loss = tape.add(loss, pen_x)?;
    if weights.discriminator && model.lang_count >= 2 {
        let (disc_loss, _) = discriminate_language(tape, tp, model, h_final, ex.lang_id)?;
        let weighted = tape.scale(disc_loss, weights.adv_weight)?;
        loss = tape.add(loss, weighted)?;
    }

    let collect =
        |tape: &Tape, rows: &[TensorId]| rows.iter().map(|&r| tape.values(r).to_vec()).collect();
    Ok(LossOutput {
        loss,
        nll,
        alpha_t: collect(tape, &alpha_t_rows),
        alpha_x: collect(tape, &alpha_x_rows),
    })
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct DecodeOutput {
    pub prediction: String,
    /// K x M tag-attention weights of the first ensemble member.
    pub alpha_t: Vec<Vec<f64>>,
    /// K x N lemma-attention weights of the first ensemble member.
    pub alpha_x: Vec<Vec<f64>>,
}

struct MemberState<'m> {
    model: &'m ModelParams,
    tape: Tape,
    tp: TapeParams,
    h_t: Vec<TensorId>,
    keys_t: Vec<TensorId>,
    h_x: Vec<TensorId>,
    keys_x: Vec<TensorId>,
    st: DecoderState,
}

/// Greedy decoding with the step distribution averaged over the ensemble
/// members. Stops at EOS or `2 * N + 10`. A predicted reserved symbol other
/// than EOS (UNK in particular) copies through the lemma character under the
/// current lemma-attention argmax of the first member.
pub fn decode(
    models: &[&ModelParams],
    vocab: &Vocabulary,
    lemma: &[char],
    tags: &[String],
    max_len: Option<usize>,
) -> Result<DecodeOutput> {
    if models.is_empty() {
        return Err(Error::usage("decode: no models"));
    }
    let first = models[0];
    for m in models {
        if m.char_count != first.char_count
            || m.tag_count != first.tag_count
            || m.config != first.config
        {
            return Err(Error::usage(
                "decode: ensemble members are not vocabulary-compatible",
            ));
        }
    }
    let lemma_ids = vocab.encode_chars(lemma);
    let tag_ids = vocab.encode_tags(tags)?;
    let limit = max_len.unwrap_or(2 * lemma.len() + 10);

    let mut members = Vec::with_capacity(models.len());
    for &model in models {
        let mut tape = Tape::new();
        let tp = model.register(&mut tape, false);
        let (h_x, _) = encode_lemma(&mut tape, &tp, model, &lemma_ids)?;
        let h_t = encode_tags(&mut tape, &tp, model, &tag_ids)?;
        let keys_t = project_keys(&mut tape, &tp.attn_t, &h_t)?;
        let keys_x = project_keys(&mut tape, &tp.attn_x, &h_x)?;
        let st = DecoderState::fresh(&tp);
        members.push(MemberState {
            model,
            tape,
            tp,
            h_t,
            keys_t,
            h_x,
            keys_x,
            st,
        });
    }

    let mut prediction = String::new();
    let mut alpha_t_rows = Vec::new();
    let mut alpha_x_rows = Vec::new();
    for _ in 0..limit {
        let mut mean: Vec<f64> = vec![0.0; first.char_count];
        let mut first_alpha_x: Vec<f64> = Vec::new();
        for (mi, member) in members.iter_mut().enumerate() {
            let (probs, new_st, a_t, a_x) = decoder_step(
                &mut member.tape,
                &member.tp,
                member.model,
                &member.st,
                &member.h_t,
                &member.keys_t,
                &member.h_x,
                &member.keys_x,
            )?;
            for (acc, p) in mean.iter_mut().zip(member.tape.values(probs)) {
                *acc += p;
            }
            if mi == 0 {
                alpha_t_rows.push(member.tape.values(a_t).to_vec());
                first_alpha_x = member.tape.values(a_x).to_vec();
                alpha_x_rows.push(first_alpha_x.clone());
            }
            member.st = new_st;
        }
        for p in &mut mean {
            *p /= members.len() as f64;
        }
        let choice = argmax(&mean);
        for member in &mut members {
            member.st.y_prev = choice;
        }
        if choice == corpus::EOS {
            break;
        }
        match vocab.char_of(choice) {
            Some(c) => prediction.push(c),
            None => {
                // copy-through for UNK (and any other reserved symbol)
                let pos = argmax(&first_alpha_x);
                prediction.push(lemma[pos]);
            }
        }
    }
    Ok(DecodeOutput {
        prediction,
        alpha_t: alpha_t_rows,
        alpha_x: alpha_x_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Example;
    use crate::rng::SeedTree;

    fn toy_vocab() -> Vocabulary {
        let data = vec![
            Example::new("abc", &["T1", "T2"], "abd", "l1"),
            Example::new("ddd", &["T3"], "abc", "l2"),
        ];
        Vocabulary::build(&[&data]).unwrap()
    }

    fn toy_model(vocab: &Vocabulary, seed: u64) -> ModelParams {
        let cfg = super::super::ModelConfig {
            embed_dim: 3,
            state_dim: 5,
            attn_dim: 4,
            disc_hidden: 4,
            ..Default::default()
        };
        let mut rng = SeedTree::new(seed).stream("init");
        ModelParams::init(vocab, cfg, &mut rng)
    }

    #[test]
    fn single_state_attentions_are_degenerate() {
        let vocab = toy_vocab();
        let model = toy_model(&vocab, 1);
        let mut tape = Tape::new();
        let tp = model.register(&mut tape, false);
        let (h_x, _) = encode_lemma(&mut tape, &tp, &model, &[4]).unwrap();
        let h_t = encode_tags(&mut tape, &tp, &model, &[1]).unwrap();
        let keys_t = project_keys(&mut tape, &tp.attn_t, &h_t).unwrap();
        let keys_x = project_keys(&mut tape, &tp.attn_x, &h_x).unwrap();
        let st = DecoderState::fresh(&tp);
        let (probs, _, a_t, a_x) =
            decoder_step(&mut tape, &tp, &model, &st, &h_t, &keys_t, &h_x, &keys_x).unwrap();
        assert_eq!(tape.values(a_t), &[1.0]);
        assert_eq!(tape.values(a_x), &[1.0]);
        let total: f64 = tape.values(probs).iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(tape.values(probs).iter().all(|&p| p > 0.0));
    }

    #[test]
    fn coverage_penalty_closed_forms() {
        // permutation matrix: doubly stochastic, penalty zero
        let perm = vec![
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ];
        assert_eq!(coverage_penalty(&perm, 0.7), 0.0);
        // all rows on column 1 of 2: ||(3,0) - (1,1)||_2 = sqrt(5)
        let conc = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]];
        let lambda = 0.3;
        assert!((coverage_penalty(&conc, lambda) - lambda * 5.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn coverage_penalty_graph_matches_plain_loop() {
        let mut rng = SeedTree::new(5).stream("cov");
        for _ in 0..20 {
            let k = 1 + rng.below(5);
            let j = 1 + rng.below(5);
            let rows: Vec<Vec<f64>> = (0..k)
                .map(|_| {
                    let raw: Vec<f64> = (0..j).map(|_| rng.range(0.0, 1.0)).collect();
                    let s: f64 = raw.iter().sum();
                    raw.iter().map(|v| v / s).collect()
                })
                .collect();
            let lambda = rng.range(0.0, 2.0);
            let plain = coverage_penalty(&rows, lambda);
            let mut tape = Tape::new();
            let ids: Vec<TensorId> = rows.iter().map(|r| tape.leaf(r.clone(), &[j])).collect();
            let node = coverage_penalty_graph(&mut tape, &ids, lambda).unwrap();
            let graph = tape.values(node)[0];
            assert!((plain - graph).abs() < 1e-12, "{plain} vs {graph}");
        }
    }

    #[test]
    fn loss_reduces_to_plain_nll_without_regularizers() {
        let vocab = toy_vocab();
        let model = toy_model(&vocab, 2);
        let e = Example::new("abc", &["T1"], "abd", "l1");
        let enc = EncodedExample::from_example(&e, &vocab).unwrap();
        let mut rng = SeedTree::new(1).stream("sched");
        let mut tape = Tape::new();
        let tp = model.register(&mut tape, false);
        let out = forward_loss(
            &mut tape,
            &tp,
            &model,
            &enc,
            &LossWeights {
                coverage_lambda: 0.0,
                adv_weight: 0.0,
                discriminator: false,
            },
            1.0,
            &mut rng,
        )
        .unwrap();
        assert!((tape.values(out.loss)[0] - out.nll).abs() < 1e-12);
        // attention rows are K x M and K x N with K = |form| + 1
        assert_eq!(out.alpha_t.len(), 4);
        assert_eq!(out.alpha_t[0].len(), 1);
        assert_eq!(out.alpha_x[0].len(), 3);
        for row in out.alpha_t.iter().chain(&out.alpha_x) {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    /// Full-sequence loss gradients on the 3-char toy model match finite
    /// differences through both attentions, the Markov feature and the
    /// coverage penalties (discriminator off: its reversal makes encoder
    /// gradients deliberately non-variational, checked elsewhere).
    #[test]
    fn full_sequence_loss_passes_grad_check() {
        let vocab = toy_vocab();
        let model = toy_model(&vocab, 9);
        let e = Example::new("abc", &["T1", "T2"], "dba", "l1");
        let enc = EncodedExample::from_example(&e, &vocab).unwrap();
        let weights = LossWeights {
            coverage_lambda: 0.1,
            adv_weight: 0.0,
            discriminator: false,
        };
        for probe in [
            "attn_x.v",
            "attn_x.markov",
            "attn_t.ws",
            "dec.wc",
            "w_out",
            "s0",
        ] {
            let index = model
                .blocks()
                .iter()
                .position(|(n, _)| *n == probe)
                .unwrap();
            let (point, shape) = {
                let blocks = model.blocks();
                let (_, p) = blocks[index];
                (p.values.clone(), p.shape.clone())
            };
            let m = model.clone();
            let enc = enc.clone();
            let err = crate::autodiff::grad_check(
                move |tape, leaf| {
                    let tp = m.register_with(tape, false, Some((index, leaf)));
                    let mut sched = SeedTree::new(1).stream("unused");
                    let out = forward_loss(tape, &tp, &m, &enc, &weights, 1.0, &mut sched)?;
                    Ok(out.loss)
                },
                &point,
                &shape,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "group {probe}: rel err {err}");
        }
    }

    #[test]
    fn full_teacher_forcing_is_deterministic_regardless_of_rng() {
        let vocab = toy_vocab();
        let model = toy_model(&vocab, 3);
        let e = Example::new("abc", &["T1", "T2"], "ddd", "l1");
        let enc = EncodedExample::from_example(&e, &vocab).unwrap();
        let weights = LossWeights {
            coverage_lambda: 0.1,
            adv_weight: 1.0,
            discriminator: true,
        };
        let run = |seed: u64| {
            let mut rng = SeedTree::new(seed).stream("sched");
            let mut tape = Tape::new();
            let tp = model.register(&mut tape, false);
            let out = forward_loss(&mut tape, &tp, &model, &enc, &weights, 1.0, &mut rng).unwrap();
            tape.values(out.loss)[0]
        };
        assert_eq!(run(1), run(999));
    }

    #[test]
    fn ensemble_of_identical_models_equals_single_decode() {
        let vocab = toy_vocab();
        let model = toy_model(&vocab, 4);
        let lemma: Vec<char> = "abc".chars().collect();
        let tags = vec!["T1".to_string()];
        let single = decode(&[&model], &vocab, &lemma, &tags, None).unwrap();
        let triple = decode(&[&model, &model, &model], &vocab, &lemma, &tags, None).unwrap();
        assert_eq!(single.prediction, triple.prediction);
        assert_eq!(single.alpha_x, triple.alpha_x);
        // distinct models generally decode differently
        let other = toy_model(&vocab, 40);
        let mixed = decode(&[&model, &other], &vocab, &lemma, &tags, None);
        assert!(mixed.is_ok());
    }

    #[test]
    fn incompatible_ensembles_are_rejected() {
        let vocab = toy_vocab();
        let model = toy_model(&vocab, 5);
        let data = vec![Example::new("xyzzy", &["T1"], "xyzzyq", "l1")];
        let bigger = Vocabulary::build(&[&data]).unwrap();
        let other = toy_model(&bigger, 5);
        let lemma: Vec<char> = "abc".chars().collect();
        let tags = vec!["T1".to_string()];
        assert!(decode(&[&model, &other], &vocab, &lemma, &tags, None).is_err());
    }

    #[test]
    fn decode_respects_max_len() {
        let vocab = toy_vocab();
        let model = toy_model(&vocab, 6);
        let lemma: Vec<char> = "abc".chars().collect();
        let tags = vec!["T1".to_string()];
        let out = decode(&[&model], &vocab, &lemma, &tags, Some(4)).unwrap();
        assert!(out.prediction.chars().count() <= 4);
        assert!(out.alpha_x.len() <= 4);
    }
}
