use super::tokenize;
use log::warn;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BleuOptions {
    /// Add-one smoothing of the n ≥ 2 precisions.
    pub add_one_smoothing: bool,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU with uniform weights over n = 1..=max_n.
pub fn bleu(candidate: &str, reference: &str, max_n: usize, opts: BleuOptions) -> f64 {
    bleu_tokens(&tokenize(candidate), &tokenize(reference), max_n, opts)
}

pub fn bleu_tokens(candidate: &[String], reference: &[String], max_n: usize, opts: BleuOptions) -> f64 {
    assert!(max_n >= 1, "max_n must be at least 1");
    if candidate.is_empty() {
        warn!("empty candidate; BLEU is 0");
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let cand = ngram_counts(candidate, n);
        let refc = ngram_counts(reference, n);
        let total: usize = cand.values().sum();
        let matched: usize = cand
            .iter()
            .map(|(g, &c)| c.min(refc.get(g).copied().unwrap_or(0)))
            .sum();
        let (num, den) = if opts.add_one_smoothing && n > 1 {
            (matched as f64 + 1.0, total as f64 + 1.0)
        } else {
            (matched as f64, total as f64)
        };
        if num == 0.0 || den == 0.0 {
            return 0.0;
        }
        log_sum += (num / den).ln();
    }
    let c = candidate.len() as f64;
    let r = reference.len() as f64;
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * (log_sum / max_n as f64).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simscore::tokenize;

    #[test]
    fn identical_is_one() {
        let t = "the heart is normal in size";
        assert_eq!(bleu(t, t, 4, BleuOptions::default()), 1.0);
        assert_eq!(bleu(t, t, 2, BleuOptions::default()), 1.0);
    }

    #[test]
    fn clipped_unigram_precision() {
        let b = bleu("the the the", "the cat", 1, BleuOptions::default());
        assert!((b - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_bigram_overlap_annihilates() {
        assert_eq!(bleu("cat the", "the cat", 2, BleuOptions::default()), 0.0);
        let smoothed = bleu(
            "cat the",
            "the cat",
            2,
            BleuOptions {
                add_one_smoothing: true,
            },
        );
        // p1 = 1, p2 = (0+1)/(1+1)
        assert!((smoothed - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn brevity_penalty() {
        // p1 = 1, c = 2, r = 4 -> exp(1 - 2)
        let b = bleu("heart normal", "heart normal lungs clear", 1, BleuOptions::default());
        assert!((b - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn empty_candidate_is_zero() {
        assert_eq!(bleu("", "anything", 2, BleuOptions::default()), 0.0);
    }

    proptest::proptest! {
        #[test]
        fn self_bleu_is_one(words in proptest::collection::vec("[a-e]{1,3}", 1..20), n in 1usize..5) {
            let text = words.join(" ");
            let toks = tokenize(&text);
            proptest::prop_assume!(n <= toks.len());
            let b = bleu_tokens(&toks, &toks, n, BleuOptions::default());
            proptest::prop_assert!((b - 1.0).abs() < 1e-12);
        }
    }
}
