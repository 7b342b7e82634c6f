//! Corpus-level BLEU over token sequences.
//!
//! Standard 4-gram BLEU: corpus-pooled modified n-gram precisions, geometric
//! mean, brevity penalty. Two adaptations for very short sequences, both
//! deterministic: a zero numerator at order n >= 2 gets add-one smoothing
//! (short decodes frequently have no 4-gram matches at all, which would
//! otherwise zero every score), and an order whose denominator is zero
//! (every hypothesis shorter than n tokens) drops out of the geometric mean
//! instead of poisoning it. Unigrams are never smoothed, so disjoint
//! hypotheses still score exactly 0.

use std::collections::HashMap;

use crate::error::{Error, Result};

const MAX_ORDER: usize = 4;

fn ngram_counts(tokens: &[u32], n: usize) -> HashMap<&[u32], u64> {
    let mut counts: HashMap<&[u32], u64> = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU of hypothesis/reference pairs, in [0, 1]. Pairs are matched
/// by position; one reference per hypothesis.
pub fn corpus_bleu(hypotheses: &[Vec<u32>], references: &[Vec<u32>]) -> Result<f64> {
    if hypotheses.is_empty() {
        return Err(Error::Metric("BLEU needs at least one hypothesis".into()));
    }
    if hypotheses.len() != references.len() {
        return Err(Error::Metric(format!(
            "{} hypotheses against {} references",
            hypotheses.len(),
            references.len()
        )));
    }

    let hyp_len: usize = hypotheses.iter().map(Vec::len).sum();
    let ref_len: usize = references.iter().map(Vec::len).sum();
    if hyp_len == 0 {
        return Ok(0.0);
    }

    let mut log_sum = 0.0;
    let mut orders_used = 0u32;
    for n in 1..=MAX_ORDER {
        let mut clipped = 0u64;
        let mut total = 0u64;
        for (hyp, rf) in hypotheses.iter().zip(references) {
            let ref_counts = ngram_counts(rf, n);
            for (gram, count) in ngram_counts(hyp, n) {
                clipped += count.min(ref_counts.get(gram).copied().unwrap_or(0));
                total += count;
            }
        }
        if total == 0 {
            continue;
        }
        let precision = if clipped > 0 {
            clipped as f64 / total as f64
        } else if n == 1 {
            return Ok(0.0);
        } else {
            (clipped + 1) as f64 / (total + 1) as f64
        };
        log_sum += precision.ln();
        orders_used += 1;
    }

    let geo_mean = (log_sum / orders_used as f64).exp();
    let brevity = if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok(brevity * geo_mean)
}
