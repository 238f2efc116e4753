//! Probe the desk-scale training trajectory: per-epoch dev accuracy and a
//! sample of predictions. Run:
//!   cargo run --release -p inflect-core --example desk_probe [p2_epochs] [p3_epochs] [hall_n] [seed]

use inflect_core::corpus::{Example, Vocabulary};
use inflect_core::hallucinate::hallucinate_dataset;
use inflect_core::model::decode;
use inflect_core::rng::SeedTree;
use inflect_core::train::{Trainer, TrainingConfig};

const CONSONANTS: [char; 6] = ['p', 't', 'k', 's', 'm', 'n'];
const VOWELS: [char; 5] = ['a', 'e', 'i', 'o', 'u'];
const SUFFIXES: [&str; 6] = ["ka", "ti", "mo", "se", "pu", "ne"];

fn mutate_vowel(v: char) -> char {
    match v {
        'a' => 'e',
        'e' => 'i',
        'i' => 'o',
        'o' => 'u',
        'u' => 'a',
        other => other,
    }
}

fn inflect_toy(stem: &str, case: usize) -> String {
    let chars: Vec<char> = stem.chars().collect();
    let (body, last) = chars.split_at(chars.len() - 1);
    let mut form: String = body.iter().collect();
    form.push(mutate_vowel(last[0]));
    form.push_str(SUFFIXES[case]);
    form
}

fn toy_corpus(count: usize, label: &str) -> Vec<Example> {
    let mut rng = SeedTree::new(2024).stream(label);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    while out.len() < count {
        let syllables = 2 + rng.below(2);
        let mut stem = String::new();
        for _ in 0..syllables {
            stem.push(CONSONANTS[rng.below(CONSONANTS.len())]);
            stem.push(VOWELS[rng.below(VOWELS.len())]);
        }
        if !seen.insert(stem.clone()) {
            continue;
        }
        let case = out.len() % SUFFIXES.len();
        let tag = format!("C{}", case + 1);
        out.push(Example::new(
            &stem,
            &["V", &tag],
            &inflect_toy(&stem, case),
            "toy",
        ));
    }
    out
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let p2: usize = args.first().and_then(|a| a.parse().ok()).unwrap_or(6);
    let p3: usize = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(3);
    let hall_n: usize = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(10_000);
    let seed: u64 = args.get(3).and_then(|a| a.parse().ok()).unwrap_or(13);

    let train = toy_corpus(100, "desk-train");
    let train_stems: std::collections::HashSet<String> =
        train.iter().map(|t| t.lemma_string()).collect();
    let dev: Vec<Example> = toy_corpus(200, "desk-dev")
        .into_iter()
        .filter(|e| !train_stems.contains(&e.lemma_string()))
        .take(100)
        .collect();
    let vocab = Vocabulary::build(&[&train, &dev]).unwrap();
    let cfg = TrainingConfig {
        seed,
        hallucinate_n: hall_n,
        max_epochs: [20, p2, p3],
        ..TrainingConfig::default()
    };
    let seeds = SeedTree::new(cfg.seed);
    let hall = if hall_n > 0 {
        hallucinate_dataset(&train, vocab.alphabet("toy").unwrap(), hall_n, 3, &seeds).unwrap()
    } else {
        Vec::new()
    };
    let start = std::time::Instant::now();
    let trainer = Trainer::new(&vocab, cfg, dev.clone()).unwrap();
    let outcome = trainer.run(&[], &train, &hall).unwrap();
    for rec in &outcome.log {
        println!("{}", rec.render());
    }
    println!("elapsed: {:?}", start.elapsed());

    let members = [
        &outcome.checkpoints.best_accuracy.params,
        &outcome.checkpoints.best_levenshtein.params,
        &outcome.checkpoints.both_improved.params,
    ];
    let mut hits = 0;
    for (i, e) in dev.iter().enumerate() {
        let out = decode(&members, &vocab, &e.lemma, &e.tags, None).unwrap();
        let gold = e.form_string().unwrap();
        if out.prediction == gold {
            hits += 1;
        } else if i < 15 {
            println!(
                "MISS {} + {} -> {} (gold {})",
                e.lemma_string(),
                e.tags.join(";"),
                out.prediction,
                gold
            );
        }
    }
    println!("ensemble dev accuracy: {}/{}", hits, dev.len());
}
