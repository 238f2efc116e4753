//! Probe warm-up dynamics on the synthetic corpus at various learning rates.
//! Run: cargo run --release -p inflect-core --example warmup_probe

use inflect_core::corpus::{Example, Vocabulary};
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

fn toy_corpus(count: usize) -> Vec<Example> {
    let mut rng = SeedTree::new(2024).stream("warmup");
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
        let chars: Vec<char> = stem.chars().collect();
        let (body, last) = chars.split_at(chars.len() - 1);
        let mut form: String = body.iter().collect();
        form.push(mutate_vowel(last[0]));
        form.push_str(SUFFIXES[case]);
        let tag = format!("C{}", case + 1);
        out.push(Example::new(&stem, &["V", &tag], &form, "toy"));
    }
    out
}

fn main() {
    let train = toy_corpus(100);
    let vocab = Vocabulary::build(&[&train]).unwrap();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let lr: f64 = args.first().and_then(|a| a.parse().ok()).unwrap_or(0.1);
    let state: usize = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(100);
    let epochs: usize = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(10);
    let cfg = TrainingConfig {
        seed: 11,
        lr,
        state_dim: state,
        attn_dim: state,
        disc_hidden: state,
        max_epochs: [epochs, 0, 0],
        ..TrainingConfig::default()
    };
    println!("lr={lr} state={state}");
    let mut trainer = Trainer::new(&vocab, cfg, Vec::new()).unwrap();
    let used = trainer.phase1_warmup(&train).unwrap();
    for rec in trainer.log() {
        println!(
            "epoch {} loss {:.4} copy_acc {:.4}",
            rec.epoch, rec.train_loss, rec.dev_acc
        );
    }
    println!("used {used} epochs");
}
