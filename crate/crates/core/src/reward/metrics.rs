//! Answer metrics. All return values in `[0, 1]`.

use std::collections::HashMap;

use super::RewardError;

/// Steepness of the soft numeric decay.
pub const SOFT_STEEPNESS: f64 = 10.0;
/// Scale for time answers, in minutes.
pub const TIME_SCALE_MINUTES: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoftMode {
    Time,
    General,
}

/// Lowercases, drops punctuation and splits on whitespace.
pub fn normalize_tokens(s: &str) -> Vec<String> {
    s.to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect::<String>()
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

pub fn exact_match(pred: &str, truth: &str) -> f64 {
    if normalize_tokens(pred) == normalize_tokens(truth) {
        1.0
    } else {
        0.0
    }
}

/// Multiset token F1.
pub fn token_f1(pred: &str, truth: &str) -> f64 {
    let p = normalize_tokens(pred);
    let t = normalize_tokens(truth);
    if p.is_empty() || t.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for tok in &t {
        *counts.entry(tok).or_default() += 1;
    }
    let mut common = 0usize;
    for tok in &p {
        if let Some(c) = counts.get_mut(tok.as_str()).filter(|c| **c > 0) {
            *c -= 1;
            common += 1;
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / t.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Positional matches over the shorter length, divided by the longer one.
pub fn array_similarity<T: PartialEq>(pred: &[T], truth: &[T]) -> f64 {
    match (pred.is_empty(), truth.is_empty()) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => {
            let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
            hits as f64 / pred.len().max(truth.len()) as f64
        }
    }
}

/// Edit distance over chars.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut row = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            row[j + 1] = sub.min(prev[j + 1] + 1).min(row[j] + 1);
        }
        std::mem::swap(&mut prev, &mut row);
    }
    prev[b.len()]
}

pub fn levenshtein_norm(pred: &str, truth: &str) -> f64 {
    let longest = pred.chars().count().max(truth.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(pred, truth) as f64 / longest as f64
}

pub fn soft_numeric(pred: f64, truth: f64, mode: SoftMode) -> Result<f64, RewardError> {
    soft_numeric_tol(pred, truth, mode, 0.0)
}

/// Errors within `tolerance` score 1.
pub fn soft_numeric_tol(pred: f64, truth: f64, mode: SoftMode, tolerance: f64) -> Result<f64, RewardError> {
    if !pred.is_finite() || !truth.is_finite() || !tolerance.is_finite() {
        return Err(RewardError::NonFinite(format!(
            "soft_numeric(pred={pred}, truth={truth}, tolerance={tolerance})"
        )));
    }
    let e = (pred - truth).abs();
    if e <= tolerance {
        return Ok(1.0);
    }
    let sigma = match mode {
        SoftMode::Time => TIME_SCALE_MINUTES,
        SoftMode::General => truth.abs().max(1.0),
    };
    Ok(1.0 / (1.0 + SOFT_STEEPNESS * e / sigma))
}
