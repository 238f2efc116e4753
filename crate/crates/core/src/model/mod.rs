//! The two-step-attention encoder-decoder with coverage and Markov attention
//! biases and an adversarial language discriminator.
//!
//! Layout: a bidirectional coupled-LSTM encoder over lemma characters, a
//! single-head self-attention encoder over tags (order-free), and a recurrent
//! decoder that first attends over the tag states with its previous state,
//! adds the tag context to form a tag-informed state, attends over the lemma
//! states with that, and then updates its recurrent state to emit a character
//! distribution.

mod attention;
mod cell;
mod decoder;
mod discriminator;
mod encoder;

pub use attention::{attend, project_keys, AttnIds};
pub use cell::{lstm_step, LstmIds};
pub use decoder::{
    coverage_penalty, coverage_penalty_graph, decode, decoder_step, forward_loss, DecodeOutput,
    DecoderState, EncodedExample, LossOutput, LossWeights,
};
pub use discriminator::discriminate_language;
pub use encoder::{encode_lemma, encode_tags};

use crate::autodiff::{Tape, TensorId};
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LstmKind {
    /// Input gate tied to the forget gate: `i = 1 - f`.
    Coupled,
    /// Separate input gate (ablation switch).
    Standard,
}

/// Architecture knobs. Dimension defaults follow the usual small-transducer
/// recipe: embeddings 32, recurrent/attention size 100, one layer everywhere,
/// one self-attention head, source and target character embeddings tied.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub state_dim: usize,
    pub attn_dim: usize,
    pub lstm_kind: LstmKind,
    pub disc_hidden: usize,
    /// Discriminator input: forward||backward concatenation (true) or the
    /// final forward state only.
    pub disc_concat: bool,
    /// Gradient-reversal scale.
    pub lambda_rev: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 32,
            state_dim: 100,
            attn_dim: 100,
            lstm_kind: LstmKind::Coupled,
            disc_hidden: 100,
            disc_concat: true,
            lambda_rev: 1.0,
        }
    }
}

/// One learned tensor with its persistent gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    fn zeros(shape: &[usize]) -> Param {
        let n = shape.iter().product();
        Param {
            shape: shape.to_vec(),
            values: vec![0.0; n],
            grad: vec![0.0; n],
        }
    }

    fn glorot(shape: &[usize], rng: &mut Rng) -> Param {
        let mut p = Param::zeros(shape);
        let (fan_out, fan_in) = match shape.len() {
            2 => (shape[0], shape[1]),
            _ => (1, shape.iter().product()),
        };
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for v in &mut p.values {
            *v = rng.range(-limit, limit);
        }
        p
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub wf: Param,
    pub bf: Param,
    pub wo: Param,
    pub bo: Param,
    pub wc: Param,
    pub bc: Param,
    /// Present only for [`LstmKind::Standard`].
    pub wi: Option<Param>,
    pub bi: Option<Param>,
}

impl LstmParams {
    fn new(in_dim: usize, state: usize, kind: LstmKind, rng: &mut Rng) -> LstmParams {
        let g = |rng: &mut Rng| Param::glorot(&[state, in_dim + state], rng);
        let standard = matches!(kind, LstmKind::Standard);
        LstmParams {
            wf: g(rng),
            bf: Param::zeros(&[state]),
            wo: g(rng),
            bo: Param::zeros(&[state]),
            wc: g(rng),
            bc: Param::zeros(&[state]),
            wi: standard.then(|| g(rng)),
            bi: standard.then(|| Param::zeros(&[state])),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttnParams {
    /// Query projection.
    pub ws: Param,
    /// State (key) projection.
    pub wh: Param,
    /// Score vector over the concatenated projections.
    pub v: Param,
    /// Learned 3-window over the previous step's weights; lemma attention
    /// only.
    pub markov: Option<Param>,
}

/// Every learned tensor of the transducer, in a fixed block order used for
/// registration, SGD, and serialization alike.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub char_count: usize,
    pub tag_count: usize,
    pub lang_count: usize,
    pub e_char: Param,
    pub e_tag: Param,
    pub enc_fwd: LstmParams,
    pub enc_bwd: LstmParams,
    pub tag_wq: Param,
    pub tag_wk: Param,
    pub tag_wv: Param,
    pub dec: LstmParams,
    pub attn_t: AttnParams,
    pub attn_x: AttnParams,
    pub w_out: Param,
    pub disc_w1: Param,
    pub disc_b1: Param,
    pub disc_w2: Param,
    pub disc_b2: Param,
    pub s0: Param,
}

impl ModelParams {
    pub fn init(vocab: &Vocabulary, config: ModelConfig, rng: &mut Rng) -> ModelParams {
        Self::init_sized(
            vocab.char_count(),
            vocab.tag_count(),
            vocab.lang_count(),
            config,
            rng,
        )
    }

    pub fn init_sized(
        char_count: usize,
        tag_count: usize,
        lang_count: usize,
        config: ModelConfig,
        rng: &mut Rng,
    ) -> ModelParams {
        let c = &config;
        let (e, s, a) = (c.embed_dim, c.state_dim, c.attn_dim);
        let disc_in = if c.disc_concat { 2 * s } else { s };
        let small = |shape: &[usize], rng: &mut Rng| {
            let mut p = Param::zeros(shape);
            for v in &mut p.values {
                *v = rng.range(-0.1, 0.1);
            }
            p
        };
        ModelParams {
            e_char: Param::glorot(&[char_count, e], rng),
            e_tag: Param::glorot(&[tag_count, e], rng),
            enc_fwd: LstmParams::new(e, s, c.lstm_kind, rng),
            enc_bwd: LstmParams::new(e, s, c.lstm_kind, rng),
            tag_wq: Param::glorot(&[a, e], rng),
            tag_wk: Param::glorot(&[a, e], rng),
            tag_wv: Param::glorot(&[s, e], rng),
            dec: LstmParams::new(2 * s + e, s, c.lstm_kind, rng),
            attn_t: AttnParams {
                ws: Param::glorot(&[a, s], rng),
                wh: Param::glorot(&[a, s], rng),
                v: small(&[2 * a], rng),
                markov: None,
            },
            attn_x: AttnParams {
                ws: Param::glorot(&[a, s], rng),
                wh: Param::glorot(&[a, 2 * s], rng),
                v: small(&[2 * a], rng),
                markov: Some(small(&[3], rng)),
            },
            w_out: Param::glorot(&[char_count, s], rng),
            disc_w1: Param::glorot(&[c.disc_hidden, disc_in], rng),
            disc_b1: Param::zeros(&[c.disc_hidden]),
            disc_w2: Param::glorot(&[lang_count, c.disc_hidden], rng),
            disc_b2: Param::zeros(&[lang_count]),
            s0: small(&[s], rng),
            char_count,
            tag_count,
            lang_count,
            config,
        }
    }

    /// All blocks in canonical order.
    pub fn blocks(&self) -> Vec<(&'static str, &Param)> {
        let mut out: Vec<(&'static str, &Param)> = Vec::with_capacity(32);
        out.push(("e_char", &self.e_char));
        out.push(("e_tag", &self.e_tag));
        push_lstm(&mut out, "enc_fwd", &self.enc_fwd);
        push_lstm(&mut out, "enc_bwd", &self.enc_bwd);
        out.push(("tag_wq", &self.tag_wq));
        out.push(("tag_wk", &self.tag_wk));
        out.push(("tag_wv", &self.tag_wv));
        push_lstm(&mut out, "dec", &self.dec);
        out.push(("attn_t.ws", &self.attn_t.ws));
        out.push(("attn_t.wh", &self.attn_t.wh));
        out.push(("attn_t.v", &self.attn_t.v));
        out.push(("attn_x.ws", &self.attn_x.ws));
        out.push(("attn_x.wh", &self.attn_x.wh));
        out.push(("attn_x.v", &self.attn_x.v));
        if let Some(m) = &self.attn_x.markov {
            out.push(("attn_x.markov", m));
        }
        out.push(("w_out", &self.w_out));
        out.push(("disc_w1", &self.disc_w1));
        out.push(("disc_b1", &self.disc_b1));
        out.push(("disc_w2", &self.disc_w2));
        out.push(("disc_b2", &self.disc_b2));
        out.push(("s0", &self.s0));
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Param)> {
        let mut out: Vec<(&'static str, &mut Param)> = Vec::with_capacity(32);
        out.push(("e_char", &mut self.e_char));
        out.push(("e_tag", &mut self.e_tag));
        push_lstm_mut(&mut out, "enc_fwd", &mut self.enc_fwd);
        push_lstm_mut(&mut out, "enc_bwd", &mut self.enc_bwd);
        out.push(("tag_wq", &mut self.tag_wq));
        out.push(("tag_wk", &mut self.tag_wk));
        out.push(("tag_wv", &mut self.tag_wv));
        push_lstm_mut(&mut out, "dec", &mut self.dec);
        out.push(("attn_t.ws", &mut self.attn_t.ws));
        out.push(("attn_t.wh", &mut self.attn_t.wh));
        out.push(("attn_t.v", &mut self.attn_t.v));
        out.push(("attn_x.ws", &mut self.attn_x.ws));
        out.push(("attn_x.wh", &mut self.attn_x.wh));
        out.push(("attn_x.v", &mut self.attn_x.v));
        if let Some(m) = &mut self.attn_x.markov {
            out.push(("attn_x.markov", m));
        }
        out.push(("w_out", &mut self.w_out));
        out.push(("disc_w1", &mut self.disc_w1));
        out.push(("disc_b1", &mut self.disc_b1));
        out.push(("disc_w2", &mut self.disc_w2));
        out.push(("disc_b2", &mut self.disc_b2));
        out.push(("s0", &mut self.s0));
        out
    }

    pub fn total_len(&self) -> usize {
        self.blocks().iter().map(|(_, p)| p.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for (_, p) in self.blocks_mut() {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// One SGD update `w -= lr * grad`; clears gradients. Errors (naming the
    /// block) if any gradient is non-finite.
    pub fn sgd_apply(&mut self, lr: f64) -> Result<()> {
        for (name, p) in self.blocks_mut() {
            if p.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::numeric(format!(
                    "non-finite gradient in parameter group {name}"
                )));
            }
            for (v, g) in p.values.iter_mut().zip(&p.grad) {
                *v -= lr * *g;
            }
        }
        self.zero_grads();
        Ok(())
    }

    /// Rescale all gradients so their global L2 norm is at most `threshold`
    /// (no-op when it already is, or when `threshold` is zero).
    pub fn clip_grads(&mut self, threshold: f64) {
        if threshold <= 0.0 {
            return;
        }
        let sq: f64 = self
            .blocks()
            .iter()
            .map(|(_, p)| p.grad.iter().map(|g| g * g).sum::<f64>())
            .sum();
        let norm = sq.sqrt();
        if norm > threshold {
            let scale = threshold / norm;
            for (_, p) in self.blocks_mut() {
                p.grad.iter_mut().for_each(|g| *g *= scale);
            }
        }
    }

    /// Register every block on a tape. `trainable` controls whether the
    /// leaves carry gradients.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> TapeParams {
        self.register_with(tape, trainable, None)
    }

    /// As [`register`], but block `index` is replaced by an existing leaf
    /// (used by gradient checking to probe one group at a time).
    pub fn register_with(
        &self,
        tape: &mut Tape,
        trainable: bool,
        replace: Option<(usize, TensorId)>,
    ) -> TapeParams {
        let mut ordered = Vec::with_capacity(32);
        {
            let blocks = self.blocks();
            for (i, (_, p)) in blocks.iter().enumerate() {
                let id = match replace {
                    Some((ri, rid)) if ri == i => {
                        assert_eq!(tape.shape(rid), p.shape.as_slice(), "override shape");
                        rid
                    }
                    _ => {
                        if trainable {
                            tape.leaf_grad(p.values.clone(), &p.shape)
                        } else {
                            tape.leaf(p.values.clone(), &p.shape)
                        }
                    }
                };
                ordered.push(id);
            }
        }
        let mut it = ordered.iter().copied();
        let mut next = || it.next().expect("ordered ids exhausted");
        let lstm_ids = |next: &mut dyn FnMut() -> TensorId, has_i: bool| LstmIds {
            wf: next(),
            bf: next(),
            wo: next(),
            bo: next(),
            wc: next(),
            bc: next(),
            wi: has_i.then(&mut *next),
            bi: has_i.then(&mut *next),
        };
        let standard = matches!(self.config.lstm_kind, LstmKind::Standard);
        let e_char = next();
        let e_tag = next();
        let enc_fwd = lstm_ids(&mut next, standard);
        let enc_bwd = lstm_ids(&mut next, standard);
        let tag_wq = next();
        let tag_wk = next();
        let tag_wv = next();
        let dec = lstm_ids(&mut next, standard);
        let attn_t = AttnIds {
            ws: next(),
            wh: next(),
            v: next(),
            markov: None,
        };
        let attn_x = AttnIds {
            ws: next(),
            wh: next(),
            v: next(),
            markov: Some(next()),
        };
        let w_out = next();
        let disc_w1 = next();
        let disc_b1 = next();
        let disc_w2 = next();
        let disc_b2 = next();
        let s0 = next();
        let zero_state = tape.zeros(&[self.config.state_dim]);
        let ones_state = tape.leaf(vec![1.0; self.config.state_dim], &[self.config.state_dim]);
        TapeParams {
            e_char,
            e_tag,
            enc_fwd,
            enc_bwd,
            tag_wq,
            tag_wk,
            tag_wv,
            dec,
            attn_t,
            attn_x,
            w_out,
            disc_w1,
            disc_b1,
            disc_w2,
            disc_b2,
            s0,
            zero_state,
            ones_state,
            ordered,
        }
    }

    /// Accumulate tape gradients into the persistent buffers.
    pub fn absorb_grads(&mut self, tape: &Tape, tp: &TapeParams) {
        let ordered = tp.ordered.clone();
        for ((_, p), id) in self.blocks_mut().into_iter().zip(ordered) {
            if let Some(g) = tape.grad(id) {
                for (acc, gi) in p.grad.iter_mut().zip(g) {
                    *acc += gi;
                }
            }
        }
    }
}

fn lstm_names(prefix: &str) -> [&'static str; 8] {
    match prefix {
        "enc_fwd" => [
            "enc_fwd.wf",
            "enc_fwd.bf",
            "enc_fwd.wo",
            "enc_fwd.bo",
            "enc_fwd.wc",
            "enc_fwd.bc",
            "enc_fwd.wi",
            "enc_fwd.bi",
        ],
        "enc_bwd" => [
            "enc_bwd.wf",
            "enc_bwd.bf",
            "enc_bwd.wo",
            "enc_bwd.bo",
            "enc_bwd.wc",
            "enc_bwd.bc",
            "enc_bwd.wi",
            "enc_bwd.bi",
        ],
        "dec" => [
            "dec.wf", "dec.bf", "dec.wo", "dec.bo", "dec.wc", "dec.bc", "dec.wi", "dec.bi",
        ],
        _ => unreachable!(),
    }
}

fn push_lstm<'a>(
    out: &mut Vec<(&'static str, &'a Param)>,
    prefix: &'static str,
    l: &'a LstmParams,
) {
    let n = lstm_names(prefix);
    out.push((n[0], &l.wf));
    out.push((n[1], &l.bf));
    out.push((n[2], &l.wo));
    out.push((n[3], &l.bo));
    out.push((n[4], &l.wc));
    out.push((n[5], &l.bc));
    if let (Some(wi), Some(bi)) = (&l.wi, &l.bi) {
        out.push((n[6], wi));
        out.push((n[7], bi));
    }
}

fn push_lstm_mut<'a>(
    out: &mut Vec<(&'static str, &'a mut Param)>,
    prefix: &'static str,
    l: &'a mut LstmParams,
) {
    let n = lstm_names(prefix);
    out.push((n[0], &mut l.wf));
    out.push((n[1], &mut l.bf));
    out.push((n[2], &mut l.wo));
    out.push((n[3], &mut l.bo));
    out.push((n[4], &mut l.wc));
    out.push((n[5], &mut l.bc));
    if let (Some(wi), Some(bi)) = (&mut l.wi, &mut l.bi) {
        out.push((n[6], wi));
        out.push((n[7], bi));
    }
}

/// Tape handles for one registration of the parameters, in block order, plus
/// shared constant leaves.
#[derive(Debug, Clone)]
pub struct TapeParams {
    pub e_char: TensorId,
    pub e_tag: TensorId,
    pub enc_fwd: LstmIds,
    pub enc_bwd: LstmIds,
    pub tag_wq: TensorId,
    pub tag_wk: TensorId,
    pub tag_wv: TensorId,
    pub dec: LstmIds,
    pub attn_t: AttnIds,
    pub attn_x: AttnIds,
    pub w_out: TensorId,
    pub disc_w1: TensorId,
    pub disc_b1: TensorId,
    pub disc_w2: TensorId,
    pub disc_b2: TensorId,
    pub s0: TensorId,
    pub zero_state: TensorId,
    pub ones_state: TensorId,
    ordered: Vec<TensorId>,
}

impl TapeParams {
    pub fn ordered(&self) -> &[TensorId] {
        &self.ordered
    }
}
