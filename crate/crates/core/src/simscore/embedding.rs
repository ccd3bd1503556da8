use crate::encoder::Encoder;
use crate::error::Result;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenMatchScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.into_iter().map(|x| x / n).collect()
    } else {
        v
    }
}

fn greedy(from: &[Vec<f64>], to: &[Vec<f64>]) -> f64 {
    let total: f64 = from
        .iter()
        .map(|a| {
            to.iter()
                .map(|b| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    total / from.len() as f64
}

/// Greedy token matching on cosine similarity: each candidate token takes its
/// best reference token (precision) and vice versa (recall); F1 combines them.
/// Either text without tokens scores 0, as does F1 when precision + recall
/// is not positive.
pub fn embedding_similarity(candidate: &str, reference: &str, encoder: &dyn Encoder) -> Result<TokenMatchScore> {
    let cand: Vec<Vec<f64>> = encoder.encode(candidate)?.into_iter().map(unit).collect();
    let refs: Vec<Vec<f64>> = encoder.encode(reference)?.into_iter().map(unit).collect();
    if cand.is_empty() || refs.is_empty() {
        return Ok(TokenMatchScore {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        });
    }
    let precision = greedy(&cand, &refs);
    let recall = greedy(&refs, &cand);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(TokenMatchScore { precision, recall, f1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{OneHotEncoder, ToyEncoder};

    #[test]
    fn identical_texts() {
        let s = embedding_similarity("mild cardiomegaly noted", "mild cardiomegaly noted", &ToyEncoder::default()).unwrap();
        assert!((s.f1 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn disjoint_under_orthogonal_encoder() {
        let e = OneHotEncoder::new(["a", "b", "c", "d"]);
        assert_eq!(embedding_similarity("a b", "c d", &e).unwrap().f1, 0.0);
    }

    #[test]
    fn two_token_hand_matching() {
        // candidate "a b", reference "a": P = (1 + 0)/2, R = 1 -> F1 = 2/3
        let e = OneHotEncoder::new(["a", "b"]);
        let s = embedding_similarity("a b", "a", &e).unwrap();
        assert!((s.precision - 0.5).abs() < 1e-12);
        assert!((s.recall - 1.0).abs() < 1e-12);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn toy_two_token_matches_manual_greedy() {
        let e = ToyEncoder::default();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let triples = [("heart", "lung", "clear"), ("effusion", "pleural", "left"), ("mild", "edema", "base")];
        for (a, b, c) in triples {
            let (va, vb, vc) = (e.token_vector(a), e.token_vector(b), e.token_vector(c));
            // candidate "a b", reference "c"
            let p = (dot(&va, &vc) + dot(&vb, &vc)) / 2.0;
            let r = dot(&vc, &va).max(dot(&vc, &vb));
            let want = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            let got = embedding_similarity(&format!("{a} {b}"), c, &e).unwrap();
            assert!((got.precision - p).abs() < 1e-12 && (got.recall - r).abs() < 1e-12);
            assert!((got.f1 - want).abs() < 1e-12, "{a} {b} {c}: {} vs {want}", got.f1);
        }
    }
}
