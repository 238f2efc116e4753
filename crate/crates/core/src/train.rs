//! Three-phase training: copy-task warm-up, cross-lingual main training,
//! low-resource fine-tuning with scheduled sampling. Plain SGD, per-epoch dev
//! evaluation, triple checkpointing.
//!
//! Determinism contract: every random decision draws from a named sub-stream
//! of the master seed, so identical (config, seed, data) reproduce identical
//! checkpoints byte for byte.

use crate::corpus::{make_copy_triples, upsample, Example, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::{exact_match_accuracy, mean_levenshtein};
use crate::model::{
    decode, forward_loss, EncodedExample, LossWeights, LstmKind, ModelConfig, ModelParams,
};
use crate::rng::{Rng, SeedTree};

/// Every training knob, config-file addressable under the same names.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub lr: f64,
    pub lr_decay: f64,
    pub decay_patience: usize,
    /// Per phase.
    pub max_epochs: [usize; 3],
    /// Per phase.
    pub batch_sizes: [usize; 3],
    /// Phase 1 stops once copy accuracy exceeds this.
    pub warmup_copy_threshold: f64,
    /// Copy-task interposal probability in phase 2.
    pub phase2_copy_prob: f64,
    /// Scheduled-sampling gold-feed probability in phase 3.
    pub phase3_sample_prob: f64,
    pub coverage_lambda: f64,
    pub adv_weight: f64,
    pub lambda_rev: f64,
    /// Global gradient-norm clip applied per batch (0 disables).
    pub grad_clip: f64,
    pub seed: u64,
    /// Hallucinated examples to generate (0 disables).
    pub hallucinate_n: usize,
    pub discriminator: bool,
    pub min_stem: usize,
    /// Cap on the fixed warm-up evaluation sample.
    pub warmup_eval_sample: usize,
    pub embed_dim: usize,
    pub state_dim: usize,
    pub attn_dim: usize,
    pub disc_hidden: usize,
    pub coupled_lstm: bool,
    pub disc_concat: bool,
    /// Reserved: grapheme-cluster segmentation. Must stay false.
    pub grapheme_mode: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            lr: 0.1,
            lr_decay: 0.5,
            decay_patience: 6,
            max_epochs: [20, 40, 40],
            batch_sizes: [10, 10, 1],
            warmup_copy_threshold: 0.75,
            phase2_copy_prob: 0.30,
            phase3_sample_prob: 0.5,
            coverage_lambda: 0.1,
            adv_weight: 1.0,
            lambda_rev: 1.0,
            grad_clip: 5.0,
            seed: 1,
            hallucinate_n: 0,
            discriminator: true,
            min_stem: 3,
            warmup_eval_sample: 200,
            embed_dim: 32,
            state_dim: 100,
            attn_dim: 100,
            disc_hidden: 100,
            coupled_lstm: true,
            disc_concat: true,
            grapheme_mode: false,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("warmup_copy_threshold", self.warmup_copy_threshold),
            ("phase2_copy_prob", self.phase2_copy_prob),
            ("phase3_sample_prob", self.phase3_sample_prob),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::usage(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        if self.batch_sizes.contains(&0) {
            return Err(Error::usage("batch sizes must be >= 1"));
        }
        if self.decay_patience == 0 {
            return Err(Error::usage("decay_patience must be >= 1"));
        }
        if self.grapheme_mode {
            return Err(Error::usage(
                "grapheme_mode is reserved and not supported in this build",
            ));
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            embed_dim: self.embed_dim,
            state_dim: self.state_dim,
            attn_dim: self.attn_dim,
            lstm_kind: if self.coupled_lstm {
                LstmKind::Coupled
            } else {
                LstmKind::Standard
            },
            disc_hidden: self.disc_hidden,
            disc_concat: self.disc_concat,
            lambda_rev: self.lambda_rev,
        }
    }

    /// Flat `key = value` rendering; parseable by [`TrainingConfig::parse`].
    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("lr", format!("{}", self.lr));
        kv("lr_decay", format!("{}", self.lr_decay));
        kv("decay_patience", format!("{}", self.decay_patience));
        kv(
            "max_epochs",
            format!(
                "{},{},{}",
                self.max_epochs[0], self.max_epochs[1], self.max_epochs[2]
            ),
        );
        kv(
            "batch_sizes",
            format!(
                "{},{},{}",
                self.batch_sizes[0], self.batch_sizes[1], self.batch_sizes[2]
            ),
        );
        kv(
            "warmup_copy_threshold",
            format!("{}", self.warmup_copy_threshold),
        );
        kv("phase2_copy_prob", format!("{}", self.phase2_copy_prob));
        kv("phase3_sample_prob", format!("{}", self.phase3_sample_prob));
        kv("coverage_lambda", format!("{}", self.coverage_lambda));
        kv("adv_weight", format!("{}", self.adv_weight));
        kv("lambda_rev", format!("{}", self.lambda_rev));
        kv("grad_clip", format!("{}", self.grad_clip));
        kv("seed", format!("{}", self.seed));
        kv("hallucinate_n", format!("{}", self.hallucinate_n));
        kv("discriminator", format!("{}", self.discriminator));
        kv("min_stem", format!("{}", self.min_stem));
        kv("warmup_eval_sample", format!("{}", self.warmup_eval_sample));
        kv("embed_dim", format!("{}", self.embed_dim));
        kv("state_dim", format!("{}", self.state_dim));
        kv("attn_dim", format!("{}", self.attn_dim));
        kv("disc_hidden", format!("{}", self.disc_hidden));
        kv("coupled_lstm", format!("{}", self.coupled_lstm));
        kv("disc_concat", format!("{}", self.disc_concat));
        kv("grapheme_mode", format!("{}", self.grapheme_mode));
        s
    }

    /// Apply `key = value` lines over `self`. Unknown keys and malformed
    /// values are errors.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<()> {
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = ln + 1;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(source, lineno, "expected `key = value`"))?;
            self.apply_kv(key.trim(), value.trim())
                .map_err(|e| Error::parse(source, lineno, e.to_string()))?;
        }
        Ok(())
    }

    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::usage(format!("invalid value {v:?} for {key}")))
        }
        fn triple(key: &str, v: &str) -> Result<[usize; 3]> {
            let parts: Vec<&str> = v.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(Error::usage(format!(
                    "{key} needs three comma-separated values"
                )));
            }
            Ok([
                num(key, parts[0])?,
                num(key, parts[1])?,
                num(key, parts[2])?,
            ])
        }
        match key {
            "lr" => self.lr = num(key, value)?,
            "lr_decay" => self.lr_decay = num(key, value)?,
            "decay_patience" => self.decay_patience = num(key, value)?,
            "max_epochs" => self.max_epochs = triple(key, value)?,
            "batch_sizes" => self.batch_sizes = triple(key, value)?,
            "warmup_copy_threshold" => self.warmup_copy_threshold = num(key, value)?,
            "phase2_copy_prob" => self.phase2_copy_prob = num(key, value)?,
            "phase3_sample_prob" => self.phase3_sample_prob = num(key, value)?,
            "coverage_lambda" => self.coverage_lambda = num(key, value)?,
            "adv_weight" => self.adv_weight = num(key, value)?,
            "lambda_rev" => self.lambda_rev = num(key, value)?,
            "grad_clip" => self.grad_clip = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "hallucinate_n" => self.hallucinate_n = num(key, value)?,
            "discriminator" => self.discriminator = num(key, value)?,
            "min_stem" => self.min_stem = num(key, value)?,
            "warmup_eval_sample" => self.warmup_eval_sample = num(key, value)?,
            "embed_dim" => self.embed_dim = num(key, value)?,
            "state_dim" => self.state_dim = num(key, value)?,
            "attn_dim" => self.attn_dim = num(key, value)?,
            "disc_hidden" => self.disc_hidden = num(key, value)?,
            "coupled_lstm" => self.coupled_lstm = num(key, value)?,
            "disc_concat" => self.disc_concat = num(key, value)?,
            "grapheme_mode" => self.grapheme_mode = num(key, value)?,
            _ => return Err(Error::usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }
}

/// One retained parameter snapshot with the dev metrics that earned it.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub params: ModelParams,
    pub accuracy: f64,
    pub levenshtein: f64,
}

/// The three retained snapshots forming the inference ensemble.
#[derive(Debug, Clone)]
pub struct CheckpointSet {
    pub best_accuracy: Snapshot,
    pub best_levenshtein: Snapshot,
    pub both_improved: Snapshot,
}

impl CheckpointSet {
    pub fn first(params: &ModelParams, accuracy: f64, levenshtein: f64) -> CheckpointSet {
        let snap = Snapshot {
            params: params.clone(),
            accuracy,
            levenshtein,
        };
        CheckpointSet {
            best_accuracy: snap.clone(),
            best_levenshtein: snap.clone(),
            both_improved: snap,
        }
    }

    /// Strictly-better replacement per slot; ties keep the older snapshot.
    /// Returns which slots were replaced.
    pub fn update(
        &mut self,
        params: &ModelParams,
        accuracy: f64,
        levenshtein: f64,
    ) -> (bool, bool, bool) {
        let mut made = None::<Snapshot>;
        let mut snap = |params: &ModelParams| -> Snapshot {
            made.get_or_insert_with(|| Snapshot {
                params: params.clone(),
                accuracy,
                levenshtein,
            })
            .clone()
        };
        let acc_up = accuracy > self.best_accuracy.accuracy;
        if acc_up {
            self.best_accuracy = snap(params);
        }
        let lev_down = levenshtein < self.best_levenshtein.levenshtein;
        if lev_down {
            self.best_levenshtein = snap(params);
        }
        let both =
            accuracy > self.both_improved.accuracy && levenshtein < self.both_improved.levenshtein;
        if both {
            self.both_improved = snap(params);
        }
        (acc_up, lev_down, both)
    }
}

/// Phase-1 epoch stream: every original plus both of its copy triples.
pub fn phase1_stream(train: &[Example]) -> Result<Vec<Example>> {
    let mut out = Vec::with_capacity(train.len() * 3);
    for e in train {
        let (lemma_copy, form_copy) = make_copy_triples(e)?;
        out.push(e.clone());
        out.push(lemma_copy);
        out.push(form_copy);
    }
    Ok(out)
}

/// Phase-2 base data: high ∪ low ∪ hallucinated, with low up-sampled to
/// |high| when no hallucinated data is present.
pub fn phase2_base(
    high: &[Example],
    low: &[Example],
    hall: &[Example],
    rng: &mut Rng,
) -> Result<Vec<Example>> {
    let mut base: Vec<Example> = Vec::new();
    base.extend_from_slice(high);
    if hall.is_empty() && !high.is_empty() {
        base.extend(upsample(low, high.len().max(low.len()), rng)?);
    } else {
        base.extend_from_slice(low);
    }
    base.extend_from_slice(hall);
    Ok(base)
}

/// Phase-2 epoch stream: the (pre-shuffled) base items with copy triples
/// interposed before each item with probability `copy_prob`; the copy base is
/// drawn uniformly from `copy_pool` and one of its two triples is used.
pub fn phase2_stream(
    base: &[Example],
    copy_pool: &[Example],
    copy_prob: f64,
    rng: &mut Rng,
) -> Result<Vec<Example>> {
    let mut out = Vec::with_capacity(base.len() + base.len() / 2);
    for e in base {
        if copy_prob > 0.0 && !copy_pool.is_empty() && rng.bernoulli(copy_prob) {
            let source = rng.choose(copy_pool);
            let (lemma_copy, form_copy) = make_copy_triples(source)?;
            out.push(if rng.bernoulli(0.5) {
                lemma_copy
            } else {
                form_copy
            });
        }
        out.push(e.clone());
    }
    Ok(out)
}

/// One line of the training log.
#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub phase: usize,
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// Copy accuracy in phase 1, dev accuracy later.
    pub dev_acc: f64,
    /// Absent in phase 1.
    pub dev_lev: Option<f64>,
    pub decayed: bool,
}

impl EpochRecord {
    pub fn render(&self) -> String {
        format!(
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}",
            self.phase,
            self.epoch,
            self.lr,
            self.train_loss,
            self.dev_acc,
            self.dev_lev
                .map_or_else(|| "-".to_string(), |l| format!("{l:.6}")),
            if self.decayed { "y" } else { "n" },
        )
    }
}

pub struct TrainOutcome {
    pub checkpoints: CheckpointSet,
    pub log: Vec<EpochRecord>,
    pub phase1_epochs: usize,
}

/// Drives the schedule over one model. Learning rate and patience carry
/// across phases 2 and 3; phase 1 monitors copy accuracy instead of the dev
/// set and never decays.
pub struct Trainer<'v> {
    pub vocab: &'v Vocabulary,
    pub cfg: TrainingConfig,
    pub params: ModelParams,
    seeds: SeedTree,
    lr: f64,
    bad_epochs: usize,
    checkpoints: Option<CheckpointSet>,
    log: Vec<EpochRecord>,
    dev: Vec<Example>,
    disc_logged: bool,
}

impl<'v> Trainer<'v> {
    pub fn new(
        vocab: &'v Vocabulary,
        cfg: TrainingConfig,
        dev: Vec<Example>,
    ) -> Result<Trainer<'v>> {
        cfg.validate()?;
        let seeds = SeedTree::new(cfg.seed);
        let mut init_rng = seeds.stream("init");
        let params = ModelParams::init(vocab, cfg.model_config(), &mut init_rng);
        Ok(Trainer {
            vocab,
            lr: cfg.lr,
            cfg,
            params,
            seeds,
            bad_epochs: 0,
            checkpoints: None,
            log: Vec::new(),
            dev,
            disc_logged: false,
        })
    }

    pub fn seeds(&self) -> SeedTree {
        self.seeds
    }

    pub fn log(&self) -> &[EpochRecord] {
        &self.log
    }

    pub fn checkpoints(&self) -> Option<&CheckpointSet> {
        self.checkpoints.as_ref()
    }

    fn encode(&self, items: &[Example]) -> Result<Vec<EncodedExample>> {
        items
            .iter()
            .map(|e| EncodedExample::from_example(e, self.vocab))
            .collect()
    }

    fn loss_weights(&self, discriminator: bool) -> LossWeights {
        LossWeights {
            coverage_lambda: self.cfg.coverage_lambda,
            adv_weight: self.cfg.adv_weight,
            discriminator,
        }
    }

    /// Summed-batch-loss SGD over one stream of items. Returns the mean
    /// per-example loss.
    fn run_epoch(
        &mut self,
        items: &[EncodedExample],
        batch_size: usize,
        tf_prob: f64,
        discriminator: bool,
        sched_rng: &mut Rng,
    ) -> Result<f64> {
        let weights = self.loss_weights(discriminator);
        let mut total = 0.0;
        for batch in items.chunks(batch_size) {
            total += sgd_step(
                &mut self.params,
                self.lr,
                batch,
                &weights,
                tf_prob,
                self.cfg.grad_clip,
                sched_rng,
            )?;
        }
        Ok(total / items.len() as f64)
    }

    /// Greedy-decode accuracy/levenshtein of the current parameters.
    fn evaluate(&self, data: &[Example]) -> Result<(f64, f64)> {
        let mut pred = Vec::with_capacity(data.len());
        let mut gold = Vec::with_capacity(data.len());
        for e in data {
            let out = decode(&[&self.params], self.vocab, &e.lemma, &e.tags, None)?;
            pred.push(out.prediction);
            gold.push(
                e.form_string()
                    .ok_or_else(|| Error::usage("evaluation example has no form"))?,
            );
        }
        Ok((
            exact_match_accuracy(&pred, &gold)?,
            mean_levenshtein(&pred, &gold)?,
        ))
    }

    /// Phase 1: warm-up on originals plus copy triples; stops once copy
    /// accuracy on a fixed sample exceeds the threshold. Returns epochs used.
    pub fn phase1_warmup(&mut self, train: &[Example]) -> Result<usize> {
        if train.is_empty() {
            return Err(Error::usage("phase 1: empty training data"));
        }
        let stream = self.encode(&phase1_stream(train)?)?;
        let copy_sample: Vec<Example> = {
            let mut copies = Vec::with_capacity(train.len() * 2);
            for e in train {
                let (a, b) = make_copy_triples(e)?;
                copies.push(a);
                copies.push(b);
            }
            let mut rng = self.seeds.stream("phase1.eval");
            rng.shuffle(&mut copies);
            copies.truncate(self.cfg.warmup_eval_sample);
            copies
        };
        let mut shuffle_rng = self.seeds.stream("phase1.shuffle");
        let mut sched_rng = self.seeds.stream("phase1.sched");
        let mut order: Vec<usize> = (0..stream.len()).collect();
        let mut used = 0;
        for epoch in 1..=self.cfg.max_epochs[0] {
            used = epoch;
            shuffle_rng.shuffle(&mut order);
            let shuffled: Vec<EncodedExample> = order.iter().map(|&i| stream[i].clone()).collect();
            let loss = self.run_epoch(
                &shuffled,
                self.cfg.batch_sizes[0],
                1.0,
                false,
                &mut sched_rng,
            )?;
            let (copy_acc, _) = self.evaluate(&copy_sample)?;
            self.log.push(EpochRecord {
                phase: 1,
                epoch,
                lr: self.lr,
                train_loss: loss,
                dev_acc: copy_acc,
                dev_lev: None,
                decayed: false,
            });
            if copy_acc > self.cfg.warmup_copy_threshold {
                break;
            }
        }
        Ok(used)
    }

    /// Dev evaluation, checkpoint update, patience bookkeeping shared by
    /// phases 2 and 3.
    fn monitored_epoch_end(&mut self, phase: usize, epoch: usize, train_loss: f64) -> Result<()> {
        let (acc, lev) = self.evaluate(&self.dev.clone())?;
        let improved = match &mut self.checkpoints {
            None => {
                self.checkpoints = Some(CheckpointSet::first(&self.params, acc, lev));
                true
            }
            Some(cs) => cs.update(&self.params, acc, lev).0,
        };
        if improved {
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        let decayed = self.bad_epochs >= self.cfg.decay_patience;
        if decayed {
            self.lr *= self.cfg.lr_decay;
        }
        self.log.push(EpochRecord {
            phase,
            epoch,
            lr: self.lr,
            train_loss,
            dev_acc: acc,
            dev_lev: Some(lev),
            decayed,
        });
        Ok(())
    }

    /// Phase 2: cross-lingual training over high ∪ low ∪ hallucinated data
    /// with interposed copy tasks; low is up-sampled to |high| when no
    /// hallucinated data is present.
    pub fn phase2_crosslingual(
        &mut self,
        high: &[Example],
        low: &[Example],
        hall: &[Example],
    ) -> Result<()> {
        if low.is_empty() {
            return Err(Error::usage("phase 2: empty low-resource data"));
        }
        let mut upsample_rng = self.seeds.stream("phase2.upsample");
        let mut base = phase2_base(high, low, hall, &mut upsample_rng)?;
        let copy_pool: Vec<Example> = high.iter().chain(low.iter()).cloned().collect();

        let discriminator = self.cfg.discriminator && self.vocab.lang_count() >= 2;
        if self.cfg.discriminator && !discriminator && !self.disc_logged {
            self.disc_logged = true;
            eprintln!("note: single-language training, adversarial discriminator disabled");
        }
        let mut shuffle_rng = self.seeds.stream("phase2.shuffle");
        let mut copy_rng = self.seeds.stream("phase2.copy");
        let mut sched_rng = self.seeds.stream("phase2.sched");
        for epoch in 1..=self.cfg.max_epochs[1] {
            shuffle_rng.shuffle(&mut base);
            let items = self.encode(&phase2_stream(
                &base,
                &copy_pool,
                self.cfg.phase2_copy_prob,
                &mut copy_rng,
            )?)?;
            let loss = self.run_epoch(
                &items,
                self.cfg.batch_sizes[1],
                1.0,
                discriminator,
                &mut sched_rng,
            )?;
            self.monitored_epoch_end(2, epoch, loss)?;
        }
        Ok(())
    }

    /// Phase 3: low-resource data only, batch 1, scheduled sampling, no copy
    /// tasks, discriminator off.
    pub fn phase3_finetune(&mut self, low: &[Example]) -> Result<()> {
        if low.is_empty() {
            return Err(Error::usage("phase 3: empty low-resource data"));
        }
        if low.iter().any(|e| e.is_copy_task) {
            return Err(Error::usage("phase 3 must not receive copy-task items"));
        }
        let stream = self.encode(low)?;
        let mut shuffle_rng = self.seeds.stream("phase3.shuffle");
        let mut sched_rng = self.seeds.stream("phase3.sched");
        let mut order: Vec<usize> = (0..stream.len()).collect();
        for epoch in 1..=self.cfg.max_epochs[2] {
            shuffle_rng.shuffle(&mut order);
            let shuffled: Vec<EncodedExample> = order.iter().map(|&i| stream[i].clone()).collect();
            let loss = self.run_epoch(
                &shuffled,
                self.cfg.batch_sizes[2],
                self.cfg.phase3_sample_prob,
                false,
                &mut sched_rng,
            )?;
            self.monitored_epoch_end(3, epoch, loss)?;
        }
        Ok(())
    }

    /// Runs all three phases. `high` may span several languages; `hall` holds
    /// pre-generated hallucinated data.
    pub fn run(
        mut self,
        high: &[Example],
        low: &[Example],
        hall: &[Example],
    ) -> Result<TrainOutcome> {
        let mut warmup: Vec<Example> = Vec::with_capacity(high.len() + low.len());
        warmup.extend_from_slice(high);
        warmup.extend_from_slice(low);
        let phase1_epochs = self.phase1_warmup(&warmup)?;
        self.phase2_crosslingual(high, low, hall)?;
        self.phase3_finetune(low)?;
        let checkpoints = self
            .checkpoints
            .expect("phase 2 ran at least one epoch and recorded checkpoints");
        Ok(TrainOutcome {
            checkpoints,
            log: self.log,
            phase1_epochs,
        })
    }

    /// Mean `|argmax_n alpha_x(k, n) - k|` over greedy decodes of `sample`;
    /// near zero when the lemma attention has learned to copy monotonically.
    pub fn copy_attention_deviation(&self, sample: &[Example]) -> Result<f64> {
        let mut total = 0.0;
        let mut steps = 0usize;
        for e in sample {
            let out = decode(&[&self.params], self.vocab, &e.lemma, &e.tags, None)?;
            for (k, row) in out.alpha_x.iter().enumerate() {
                let argmax = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                total += (argmax as f64 - k as f64).abs();
                steps += 1;
            }
        }
        if steps == 0 {
            return Err(Error::usage("copy_attention_deviation: no decode steps"));
        }
        Ok(total / steps as f64)
    }
}

/// One SGD step over a batch: zero gradients, sum the per-example losses on a
/// single tape, backpropagate once, clip the global gradient norm, apply
/// `w -= lr * grad`, clear gradients. Returns the summed batch loss.
pub fn sgd_step(
    params: &mut ModelParams,
    lr: f64,
    batch: &[EncodedExample],
    weights: &LossWeights,
    tf_prob: f64,
    grad_clip: f64,
    sched_rng: &mut Rng,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::usage("sgd_step: empty batch"));
    }
    params.zero_grads();
    let mut tape = crate::autodiff::Tape::new();
    let tp = params.register(&mut tape, true);
    let mut losses = Vec::with_capacity(batch.len());
    for ex in batch {
        let out = forward_loss(&mut tape, &tp, params, ex, weights, tf_prob, sched_rng)?;
        losses.push(out.loss);
    }
    let total = tape.add_all(&losses)?;
    let total_value = tape.values(total)[0];
    tape.backward(total)?;
    params.absorb_grads(&tape, &tp);
    params.clip_grads(grad_clip);
    params.sgd_apply(lr)?;
    Ok(total_value)
}
