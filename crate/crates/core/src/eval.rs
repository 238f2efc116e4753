//! Exact-match accuracy and mean character-level Levenshtein distance.
//!
//! Both metrics compare raw Unicode scalar sequences; no normalization is
//! applied here.

use crate::align::levenshtein;
use crate::error::{Error, Result};

fn check_lists(pred: &[String], gold: &[String]) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::usage("evaluate: empty prediction list"));
    }
    if pred.len() != gold.len() {
        return Err(Error::usage(format!(
            "evaluate: {} predictions vs {} gold forms",
            pred.len(),
            gold.len()
        )));
    }
    Ok(())
}

/// Fraction of positions where the strings match codepoint-for-codepoint.
pub fn exact_match_accuracy(pred: &[String], gold: &[String]) -> Result<f64> {
    check_lists(pred, gold)?;
    let hits = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Arithmetic mean of unit-cost edit distances.
pub fn mean_levenshtein(pred: &[String], gold: &[String]) -> Result<f64> {
    check_lists(pred, gold)?;
    let total: usize = pred
        .iter()
        .zip(gold)
        .map(|(p, g)| {
            let pc: Vec<char> = p.chars().collect();
            let gc: Vec<char> = g.chars().collect();
            levenshtein(&pc, &gc)
        })
        .sum();
    Ok(total as f64 / pred.len() as f64)
}
