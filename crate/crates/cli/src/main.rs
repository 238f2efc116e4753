//! `inflect` - train and run character-level inflection models.
//!
//! Subcommands: align, hallucinate, train, predict, evaluate, dump-attention.
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

mod args;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use inflect_core::align::{align_chars, find_stem_regions};
use inflect_core::corpus::{self, Example, Vocabulary};
use inflect_core::error::Error;
use inflect_core::eval::{exact_match_accuracy, mean_levenshtein};
use inflect_core::hallucinate::hallucinate_dataset_parallel;
use inflect_core::model::{decode, ModelParams};
use inflect_core::rng::SeedTree;
use inflect_core::serialize::{
    config_hash, load_model, save_model, write_attention_records, AttentionRecord,
};
use inflect_core::train::{Trainer, TrainingConfig};
use inflect_core::Result;

use args::{lang_and_path, Flags};

const USAGE: &str = "\
usage: inflect <subcommand> [flags]

  align          --in FILE [--min-stem N]
  hallucinate    --in FILE --out FILE --n N --seed S [--min-stem N] [--workers W]
  train          --low FILE --dev FILE --out DIR [--high FILE[,FILE...]]
                 [--hallucinate N] [--no-adv] [--config FILE] [--seed S]
                 [--set key=value ...]
  predict        --model DIR --in FILE --out FILE [--no-ensemble]
  evaluate       --pred FILE --gold FILE [--per-example FILE]
  dump-attention --model DIR --in FILE --out FILE [--no-ensemble]

Input files are UTF-8 TSV: lemma<TAB>form<TAB>tag1;tag2;...
Prediction inputs may carry `_` in the form column. A `LANG=PATH` spec
overrides the language id derived from the file stem.
";

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    match run(&argv) {
        Ok(()) => ExitCode::from(0),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Usage(_) => 1,
                Error::Numeric(_) => 3,
                Error::Parse { .. } | Error::Io(_) | Error::Vocab(_) | Error::Shape { .. } => 2,
            };
            ExitCode::from(code)
        }
    }
}

fn run(argv: &[String]) -> Result<()> {
    let Some(cmd) = argv.first() else {
        eprint!("{USAGE}");
        return Err(Error::usage("no subcommand given"));
    };
    let rest = &argv[1..];
    match cmd.as_str() {
        "align" => cmd_align(rest),
        "hallucinate" => cmd_hallucinate(rest),
        "train" => cmd_train(rest),
        "predict" => cmd_predict(rest),
        "evaluate" => cmd_evaluate(rest),
        "dump-attention" => cmd_dump_attention(rest),
        "help" | "--help" | "-h" => {
            print!("{USAGE}");
            Ok(())
        }
        other => {
            eprint!("{USAGE}");
            Err(Error::usage(format!("unknown subcommand {other:?}")))
        }
    }
}

fn load_examples(spec: &str) -> Result<(String, Vec<Example>)> {
    let (lang, path) = lang_and_path(spec);
    let examples = corpus::parse_tsv(Path::new(&path), &lang)?;
    Ok((lang, examples))
}

/// One line per example: lemma, form, bracketed stem spans
/// `[lstart,lend)=[fstart,fend)`.
fn cmd_align(argv: &[String]) -> Result<()> {
    let flags = Flags::parse(argv, &["in", "min-stem"], &[], false)?;
    let min_stem: usize = flags.get_parsed("min-stem")?.unwrap_or(3);
    let input = flags.require("in")?;
    let (_, examples) = load_examples(input)?;
    let mut out = String::new();
    for (i, e) in examples.iter().enumerate() {
        let form = e
            .form
            .as_ref()
            .ok_or_else(|| Error::parse(input, i + 1, "example has no form"))?;
        let alignment = align_chars(&e.lemma, form);
        let regions = find_stem_regions(&e.lemma, form, &alignment, min_stem);
        let spans: Vec<String> = regions
            .iter()
            .map(|r| {
                format!(
                    "[{},{})=[{},{})",
                    r.lemma_span.0, r.lemma_span.1, r.form_span.0, r.form_span.1
                )
            })
            .collect();
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            e.lemma_string(),
            e.form_string().unwrap_or_default(),
            spans.join(" ")
        ));
    }
    print!("{out}");
    Ok(())
}

fn cmd_hallucinate(argv: &[String]) -> Result<()> {
    let flags = Flags::parse(
        argv,
        &["in", "out", "n", "seed", "min-stem", "workers"],
        &[],
        false,
    )?;
    let n: usize = flags
        .get_parsed("n")?
        .ok_or_else(|| Error::usage("missing required flag --n"))?;
    let seed: u64 = flags.get_parsed("seed")?.unwrap_or(1);
    let min_stem: usize = flags.get_parsed("min-stem")?.unwrap_or(3);
    let workers: usize = flags.get_parsed("workers")?.unwrap_or(1);
    let out_path = PathBuf::from(flags.require("out")?);
    let (lang, examples) = load_examples(flags.require("in")?)?;
    if examples.is_empty() {
        return Err(Error::usage("hallucinate: input corpus is empty"));
    }
    let vocab = Vocabulary::build(&[&examples])?;
    let alphabet = vocab.alphabet(&lang)?;
    let seeds = SeedTree::new(seed);
    let hall = hallucinate_dataset_parallel(&examples, alphabet, n, min_stem, &seeds, workers)?;
    fs::write(&out_path, corpus::to_tsv(&hall))?;
    let meta = format!(
        "# inflect hallucinate effective configuration\nin = {}\nlanguage = {}\nn = {}\nseed = {}\nmin_stem = {}\nworkers = {}\n",
        flags.require("in")?,
        lang,
        n,
        seed,
        min_stem,
        workers
    );
    fs::write(out_path.with_extension("meta"), &meta)?;
    eprint!("{meta}");
    Ok(())
}

fn cmd_train(argv: &[String]) -> Result<()> {
    let flags = Flags::parse(
        argv,
        &["high", "low", "dev", "hallucinate", "config", "out", "seed"],
        &["no-adv"],
        true,
    )?;
    let mut cfg = TrainingConfig::default();
    if let Some(path) = flags.get("config") {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::parse(path.to_string(), 0, e.to_string()))?;
        cfg.apply_text(&text, path)?;
    }
    for (k, v) in &flags.sets {
        cfg.apply_kv(k, v)?;
    }
    if let Some(n) = flags.get_parsed("hallucinate")? {
        cfg.hallucinate_n = n;
    }
    if let Some(seed) = flags.get_parsed("seed")? {
        cfg.seed = seed;
    }
    if flags.has("no-adv") {
        cfg.discriminator = false;
    }
    cfg.validate()?;

    let (low_lang, low) = load_examples(flags.require("low")?)?;
    let (_, dev) = {
        let (_, path) = lang_and_path(flags.require("dev")?);
        (
            path.clone(),
            corpus::parse_tsv(Path::new(&path), &low_lang)?,
        )
    };
    let mut high: Vec<Example> = Vec::new();
    if let Some(spec) = flags.get("high") {
        for part in spec.split(',').filter(|p| !p.is_empty()) {
            let (_, examples) = load_examples(part)?;
            high.extend(examples);
        }
    }
    if low.is_empty() {
        return Err(Error::usage("train: low-resource corpus is empty"));
    }
    if dev.is_empty() {
        return Err(Error::usage("train: dev corpus is empty"));
    }

    let out_dir = PathBuf::from(flags.require("out")?);
    fs::create_dir_all(&out_dir)?;

    let vocab = Vocabulary::build(&[&high, &low, &dev])?;
    let seeds = SeedTree::new(cfg.seed);
    let hall = if cfg.hallucinate_n > 0 {
        hallucinate_dataset_parallel(
            &low,
            vocab.alphabet(&low_lang)?,
            cfg.hallucinate_n,
            cfg.min_stem,
            &seeds,
            1,
        )?
    } else {
        Vec::new()
    };

    let rendered = cfg.render();
    let effective = format!(
        "# inflect train effective configuration\n# high = {}\n# low = {}\n# dev = {}\n# out = {}\n{}",
        flags.get("high").unwrap_or(""),
        flags.require("low")?,
        flags.require("dev")?,
        out_dir.display(),
        rendered
    );
    fs::write(out_dir.join("config.txt"), &effective)?;
    eprint!("{effective}");
    // hash covers the resolved config only, not the provenance comments
    let hash = config_hash(&rendered);

    let trainer = Trainer::new(&vocab, cfg, dev)?;
    let outcome = trainer.run(&high, &low, &hall)?;

    save_model(
        &out_dir.join("model.acc"),
        &outcome.checkpoints.best_accuracy.params,
        &vocab,
        &hash,
    )?;
    save_model(
        &out_dir.join("model.lev"),
        &outcome.checkpoints.best_levenshtein.params,
        &vocab,
        &hash,
    )?;
    save_model(
        &out_dir.join("model.both"),
        &outcome.checkpoints.both_improved.params,
        &vocab,
        &hash,
    )?;
    let mut log = String::new();
    for rec in &outcome.log {
        log.push_str(&rec.render());
        log.push('\n');
    }
    fs::write(out_dir.join("train.log"), log)?;
    eprintln!(
        "trained: warm-up used {} epochs; best dev accuracy {:.4}, best dev distance {:.4}",
        outcome.phase1_epochs,
        outcome.checkpoints.best_accuracy.accuracy,
        outcome.checkpoints.best_levenshtein.levenshtein
    );
    Ok(())
}

/// Load the ensemble (or just the best-accuracy member) from a training
/// output directory.
fn load_ensemble(dir: &str, ensemble: bool) -> Result<(Vec<ModelParams>, Vocabulary)> {
    let dir = Path::new(dir);
    let slots: &[&str] = if ensemble {
        &["model.acc", "model.lev", "model.both"]
    } else {
        &["model.acc"]
    };
    let mut models = Vec::new();
    let mut vocab: Option<Vocabulary> = None;
    for slot in slots {
        let (params, v, _) = load_model(&dir.join(slot))?;
        match &vocab {
            None => vocab = Some(v),
            Some(existing) if *existing == v => {}
            Some(_) => {
                return Err(Error::usage(format!(
                    "checkpoint {slot} carries a different vocabulary than its siblings"
                )))
            }
        }
        models.push(params);
    }
    Ok((models, vocab.expect("at least one slot loaded")))
}

fn decode_file(
    model_dir: &str,
    input: &str,
    ensemble: bool,
) -> Result<(Vec<Example>, Vec<inflect_core::model::DecodeOutput>)> {
    let (models, vocab) = load_ensemble(model_dir, ensemble)?;
    let refs: Vec<&ModelParams> = models.iter().collect();
    let (_, examples) = load_examples(input)?;
    let mut outputs = Vec::with_capacity(examples.len());
    for e in &examples {
        outputs.push(decode(&refs, &vocab, &e.lemma, &e.tags, None)?);
    }
    Ok((examples, outputs))
}

fn cmd_predict(argv: &[String]) -> Result<()> {
    let flags = Flags::parse(argv, &["model", "in", "out"], &["no-ensemble"], false)?;
    let (examples, outputs) = decode_file(
        flags.require("model")?,
        flags.require("in")?,
        !flags.has("no-ensemble"),
    )?;
    let mut out = String::new();
    for (e, o) in examples.iter().zip(&outputs) {
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            e.lemma_string(),
            o.prediction,
            e.tags.join(";")
        ));
    }
    fs::write(flags.require("out")?, out)?;
    Ok(())
}

fn cmd_evaluate(argv: &[String]) -> Result<()> {
    let flags = Flags::parse(argv, &["pred", "gold", "per-example"], &[], false)?;
    let (_, pred) = load_examples(flags.require("pred")?)?;
    let (_, gold) = load_examples(flags.require("gold")?)?;
    if pred.len() != gold.len() {
        return Err(Error::usage(format!(
            "evaluate: {} predictions vs {} gold examples",
            pred.len(),
            gold.len()
        )));
    }
    let take_forms = |items: &[Example], what: &str| -> Result<Vec<String>> {
        items
            .iter()
            .enumerate()
            .map(|(i, e)| {
                e.form_string()
                    .ok_or_else(|| Error::usage(format!("{what} line {}: missing form", i + 1)))
            })
            .collect()
    };
    let pred_forms = take_forms(&pred, "predictions")?;
    let gold_forms = take_forms(&gold, "gold")?;
    let acc = exact_match_accuracy(&pred_forms, &gold_forms)?;
    let lev = mean_levenshtein(&pred_forms, &gold_forms)?;
    println!("{acc:.6}\t{lev:.6}");
    if let Some(path) = flags.get("per-example") {
        let mut out = String::new();
        for (p, g) in pred_forms.iter().zip(&gold_forms) {
            let pc: Vec<char> = p.chars().collect();
            let gc: Vec<char> = g.chars().collect();
            let d = inflect_core::align::levenshtein(&pc, &gc);
            out.push_str(&format!("{p}\t{g}\t{}\t{d}\n", u8::from(p == g)));
        }
        fs::write(path, out)?;
    }
    Ok(())
}

fn cmd_dump_attention(argv: &[String]) -> Result<()> {
    let flags = Flags::parse(argv, &["model", "in", "out"], &["no-ensemble"], false)?;
    let (examples, outputs) = decode_file(
        flags.require("model")?,
        flags.require("in")?,
        !flags.has("no-ensemble"),
    )?;
    let records: Vec<AttentionRecord> = examples
        .iter()
        .zip(outputs)
        .map(|(e, o)| AttentionRecord {
            lemma: e.lemma_string(),
            tags: e.tags.clone(),
            prediction: o.prediction,
            alpha_t: o.alpha_t,
            alpha_x: o.alpha_x,
        })
        .collect();
    let mut file = fs::File::create(flags.require("out")?)?;
    write_attention_records(&mut file, &records)?;
    Ok(())
}
