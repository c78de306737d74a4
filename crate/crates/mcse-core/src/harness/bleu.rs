//! BLEU baseline: geometric mean of modified n-gram precisions with a
//! brevity penalty, defaulting to bigram order.
//!
//! Candidate n-gram counts are clipped by their reference counts, so
//! repeating a reference word does not inflate precision. A zero precision at
//! any order zeroes the whole score unless epsilon smoothing is on, which
//! replaces a zero clipped count with a small constant numerator. The
//! geometric mean is taken in log space so tiny smoothed precisions cannot
//! underflow to zero before the root.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::Scalar;

/// How zero clipped counts are handled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Smoothing {
    /// Any zero precision makes the score 0.
    None,
    /// A zero clipped count is replaced by this constant before dividing,
    /// keeping the geometric mean positive. Must be positive; 1e-9 keeps the
    /// penalty near-total, 0.1 mimics the common add-a-tenth convention.
    Epsilon(f64),
}

/// BLEU result with its working shown: per-order precisions, the brevity
/// penalty, token counts, and a human-readable variant tag recording the
/// order and smoothing actually used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuScore<S> {
    pub score: S,
    pub precisions: Vec<S>,
    pub brevity_penalty: S,
    pub reference_tokens: usize,
    pub candidate_tokens: usize,
    pub order: usize,
    pub variant: String,
    pub note: Option<String>,
}

fn ngram_counts<'a>(tokens: &'a [&'a str], n: usize) -> HashMap<&'a [&'a str], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Score a candidate token sequence against a reference at orders
/// 1 through `max_order` (which must be at least 1). An empty candidate, or
/// one shorter than `max_order`, scores 0 with an explanatory note.
#[must_use]
pub fn bleu<S: Scalar, T: AsRef<str>>(
    reference: &[T],
    candidate: &[T],
    max_order: usize,
    smoothing: Smoothing,
) -> BleuScore<S> {
    assert!(max_order >= 1, "n-gram order must be at least 1");
    let variant = match smoothing {
        Smoothing::None => format!("{max_order}-gram, unsmoothed"),
        Smoothing::Epsilon(epsilon) => format!("{max_order}-gram, epsilon {epsilon}"),
    };

    let reference: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    let candidate: Vec<&str> = candidate.iter().map(AsRef::as_ref).collect();
    let (r, c) = (reference.len(), candidate.len());

    let mut result = BleuScore {
        score: S::zero(),
        precisions: vec![S::zero(); max_order],
        brevity_penalty: S::zero(),
        reference_tokens: r,
        candidate_tokens: c,
        order: max_order,
        variant,
        note: None,
    };
    if c == 0 {
        result.note = Some("empty candidate scores 0".to_string());
        return result;
    }

    result.brevity_penalty = if c > r {
        S::one()
    } else {
        let length_ratio = S::from_usize(r).expect("token count fits the scalar")
            / S::from_usize(c).expect("token count fits the scalar");
        (S::one() - length_ratio).exp()
    };

    let mut log_sum = S::zero();
    for n in 1..=max_order {
        if c < n {
            result.note = Some(format!("candidate has no {n}-grams, score is 0"));
            return result;
        }
        let total = c - n + 1;
        let reference_counts = ngram_counts(&reference, n);
        let mut clipped = 0usize;
        for (gram, count) in ngram_counts(&candidate, n) {
            clipped += count.min(reference_counts.get(gram).copied().unwrap_or(0));
        }

        let total_s = S::from_usize(total).expect("n-gram count fits the scalar");
        let precision = if clipped > 0 {
            S::from_usize(clipped).expect("n-gram count fits the scalar") / total_s
        } else {
            match smoothing {
                Smoothing::None => S::zero(),
                Smoothing::Epsilon(epsilon) => {
                    S::from_f64(epsilon).expect("epsilon fits the scalar") / total_s
                }
            }
        };
        result.precisions[n - 1] = precision;
        if precision.is_zero() {
            return result;
        }
        log_sum = log_sum + precision.ln();
    }

    let mean_log = log_sum / S::from_usize(max_order).expect("order fits the scalar");
    result.score = result.brevity_penalty * mean_log.exp();
    result
}
