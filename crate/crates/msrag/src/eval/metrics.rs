//! Answer normalization and the EM / token-F1 / boolean-accuracy metrics.
//!
//! Normalization follows the SQuAD convention: lowercase, strip punctuation,
//! drop the articles "a"/"an"/"the" as whole tokens, collapse whitespace.
//! That choice affects absolute numbers and is documented in the README.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// SQuAD-style normalization: lowercase, remove ASCII punctuation, remove
/// article tokens, collapse whitespace and trim.
pub fn normalize_answer(s: &str) -> String {
    let lowered = s.to_lowercase();
    let no_punct: String = lowered
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    no_punct
        .split_whitespace()
        .filter(|token| !matches!(*token, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// 1 iff the normalized prediction equals some normalized gold alias.
pub fn exact_match(pred: &str, golds: &[String]) -> u8 {
    let pred = normalize_answer(pred);
    golds.iter().any(|g| normalize_answer(g) == pred) as u8
}

fn token_counts(s: &str) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for token in s.split_whitespace() {
        *counts.entry(token.to_string()).or_insert(0) += 1;
    }
    counts
}

fn f1_single(pred: &str, gold: &str) -> f64 {
    let pred_norm = normalize_answer(pred);
    let gold_norm = normalize_answer(gold);
    let pred_counts = token_counts(&pred_norm);
    let gold_counts = token_counts(&gold_norm);
    let pred_len: usize = pred_counts.values().sum();
    let gold_len: usize = gold_counts.values().sum();

    if pred_len == 0 && gold_len == 0 {
        return 1.0;
    }
    if pred_len == 0 || gold_len == 0 {
        return 0.0;
    }

    let overlap: usize = pred_counts
        .iter()
        .map(|(token, count)| count.min(gold_counts.get(token).unwrap_or(&0)))
        .sum();
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred_len as f64;
    let recall = overlap as f64 / gold_len as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Token-multiset F1, maximized over gold aliases.
pub fn token_f1(pred: &str, golds: &[String]) -> f64 {
    golds.iter().map(|g| f1_single(pred, g)).fold(0.0, f64::max)
}

/// Outcome of boolean answer scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoolScore {
    pub correct: u8,
    /// False when no yes/no token was found in the prediction.
    pub parseable: bool,
}

/// Scan the normalized prediction left to right for the first yes-token
/// ("yes"/"true") or no-token ("no"/"false") and compare it against gold.
/// Unparseable predictions score 0 and are flagged.
pub fn boolean_accuracy(pred: &str, gold: bool) -> BoolScore {
    let normalized = normalize_answer(pred);
    let verdict = normalized.split_whitespace().find_map(|token| match token {
        "yes" | "true" => Some(true),
        "no" | "false" => Some(false),
        _ => None,
    });
    match verdict {
        Some(v) => BoolScore {
            correct: (v == gold) as u8,
            parseable: true,
        },
        None => BoolScore {
            correct: 0,
            parseable: false,
        },
    }
}
