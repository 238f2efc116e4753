//! Adversarial language discriminator.
//!
//! A one-hidden-layer MLP over the encoder's final lemma state predicts the
//! source language under cross-entropy. The input passes through
//! grad_reverse first, so the discriminator's own parameters receive the true
//! gradient while the encoder receives the negated (scaled) one, pushing it
//! toward language-invariant representations.

use crate::autodiff::{Tape, TensorId};
use crate::error::{Error, Result};

use super::{ModelParams, TapeParams};

/// Returns the cross-entropy loss node and the predicted distribution. With
/// fewer than two registered languages the discriminator is disabled and the
/// loss is a constant zero.
pub fn discriminate_language(
    tape: &mut Tape,
    tp: &TapeParams,
    model: &ModelParams,
    h_x_final: TensorId,
    true_lang: usize,
) -> Result<(TensorId, Vec<f64>)> {
    if model.lang_count < 2 {
        let zero = tape.scalar(0.0);
        return Ok((zero, vec![1.0]));
    }
    if true_lang >= model.lang_count {
        return Err(Error::Vocab(format!(
            "language id {true_lang} out of range (< {})",
            model.lang_count
        )));
    }
    let reversed = tape.grad_reverse(h_x_final, model.config.lambda_rev)?;
    let z1 = tape.matmul(tp.disc_w1, reversed)?;
    let z1b = tape.add(z1, tp.disc_b1)?;
    let hidden = tape.tanh(z1b)?;
    let z2 = tape.matmul(tp.disc_w2, hidden)?;
    let logits = tape.add(z2, tp.disc_b2)?;
    let probs = tape.softmax(logits)?;
    let loss = tape.logloss(probs, true_lang)?;
    let dist = tape.values(probs).to_vec();
    Ok((loss, dist))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{encode_lemma, ModelConfig};
    use crate::rng::SeedTree;

    fn toy(langs: usize, lambda_rev: f64) -> ModelParams {
        let cfg = ModelConfig {
            embed_dim: 3,
            state_dim: 4,
            attn_dim: 4,
            disc_hidden: 5,
            lambda_rev,
            ..Default::default()
        };
        let mut rng = SeedTree::new(13).stream("init");
        ModelParams::init_sized(8, 3, langs, cfg, &mut rng)
    }

    #[test]
    fn equal_logits_cost_ln_two() {
        let mut model = toy(2, 1.0);
        // zero the MLP so the two logits coincide
        for p in [
            &mut model.disc_w1,
            &mut model.disc_b1,
            &mut model.disc_w2,
            &mut model.disc_b2,
        ] {
            p.values.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut tape = Tape::new();
        let tp = model.register(&mut tape, false);
        let (_, h_final) = encode_lemma(&mut tape, &tp, &model, &[4, 5]).unwrap();
        let (loss, probs) = discriminate_language(&mut tape, &tp, &model, h_final, 0).unwrap();
        assert!((tape.values(loss)[0] - 2.0f64.ln()).abs() < 1e-12);
        assert_eq!(probs, vec![0.5, 0.5]);
    }

    #[test]
    fn single_language_disables_the_loss() {
        let model = toy(1, 1.0);
        let mut tape = Tape::new();
        let tp = model.register(&mut tape, true);
        let (_, h_final) = encode_lemma(&mut tape, &tp, &model, &[4]).unwrap();
        let (loss, _) = discriminate_language(&mut tape, &tp, &model, h_final, 0).unwrap();
        assert_eq!(tape.values(loss), &[0.0]);
        tape.backward(loss).unwrap();
        // nothing flows anywhere
        assert!(
            tape.grad(tp.disc_w1).is_none()
                || tape.grad(tp.disc_w1).unwrap().iter().all(|&g| g == 0.0)
        );
    }

    /// Encoder-side gradients flip sign (scaled by lambda_rev) under
    /// reversal; discriminator-side gradients are identical with and without
    /// it.
    #[test]
    fn reversal_semantics_paired_backward() {
        for lambda in [1.0, 0.5, 2.0] {
            let model = toy(2, lambda);
            let run = |reverse: bool| {
                let mut tape = Tape::new();
                let tp = model.register(&mut tape, true);
                let (_, h_final) = encode_lemma(&mut tape, &tp, &model, &[4, 5, 6]).unwrap();
                let input = if reverse {
                    tape.grad_reverse(h_final, model.config.lambda_rev).unwrap()
                } else {
                    h_final
                };
                let z1 = tape.matmul(tp.disc_w1, input).unwrap();
                let z1b = tape.add(z1, tp.disc_b1).unwrap();
                let hidden = tape.tanh(z1b).unwrap();
                let z2 = tape.matmul(tp.disc_w2, hidden).unwrap();
                let logits = tape.add(z2, tp.disc_b2).unwrap();
                let probs = tape.softmax(logits).unwrap();
                let loss = tape.logloss(probs, 1).unwrap();
                tape.backward(loss).unwrap();
                let enc_grad = tape.grad(tp.enc_fwd.wf).unwrap().to_vec();
                let disc_grad = tape.grad(tp.disc_w1).unwrap().to_vec();
                (enc_grad, disc_grad)
            };
            let (enc_rev, disc_rev) = run(true);
            let (enc_plain, disc_plain) = run(false);
            for (r, p) in enc_rev.iter().zip(&enc_plain) {
                assert!(
                    (r - (-lambda * p)).abs() <= 1e-12,
                    "{r} vs {p} (lambda {lambda})"
                );
            }
            assert_eq!(disc_rev, disc_plain);
        }
    }
}
