//! Referenceless quality estimator.
//!
//! Source (ground-truth report) and hypothesis (generated report) are encoded
//! independently, pooled into sentence embeddings `h` and `s`, combined into
//! `[h; s; h*s; |h-s|]` and regressed to a scalar quality score.

mod checkpoint;
mod regressor;
mod train;

pub use checkpoint::{radeval_score, radeval_score_batch, EstimatorCheckpoint, RadEvalScore};
pub use regressor::{Adam, Regressor};
pub use train::{
    encode_features, fit, read_training_jsonl, select_epoch, train, typical_range, EpochRecord, OptimizerKind, TrainingConfig, TrainingExample,
    TrainingOutcome,
};

use crate::encoder::Encoder;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Pooled sentence embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceEmbedding(pub Vec<f64>);

/// `[h; s; h*s; |h-s|]`, dimension 4d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedFeatures(pub Vec<f64>);

impl CombinedFeatures {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingMode {
    #[default]
    Mean,
    FirstToken,
}

pub fn pool(tokens: &[Vec<f64>], mode: PoolingMode) -> Result<SentenceEmbedding> {
    let first = tokens.first().ok_or(Error::Empty("token sequence"))?;
    match mode {
        PoolingMode::FirstToken => Ok(SentenceEmbedding(first.clone())),
        PoolingMode::Mean => {
            let d = first.len();
            let mut acc = vec![0.0; d];
            for t in tokens {
                if t.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        actual: t.len(),
                    });
                }
                acc.iter_mut().zip(t).for_each(|(a, v)| *a += v);
            }
            let n = tokens.len() as f64;
            Ok(SentenceEmbedding(acc.into_iter().map(|a| a / n).collect()))
        }
    }
}

/// Combines hypothesis `h` and source `s` embeddings.
pub fn combine(h: &SentenceEmbedding, s: &SentenceEmbedding) -> Result<CombinedFeatures> {
    let (h, s) = (&h.0, &s.0);
    if h.len() != s.len() {
        return Err(Error::DimensionMismatch {
            expected: h.len(),
            actual: s.len(),
        });
    }
    let mut out = Vec::with_capacity(4 * h.len());
    out.extend_from_slice(h);
    out.extend_from_slice(s);
    out.extend(h.iter().zip(s).map(|(a, b)| a * b));
    out.extend(h.iter().zip(s).map(|(a, b)| (a - b).abs()));
    Ok(CombinedFeatures(out))
}

/// Encodes and pools both texts, then combines them; `source` is the
/// ground-truth report and `hypothesis` the generated one.
pub fn features_for(
    encoder: &dyn Encoder,
    pooling: PoolingMode,
    source: &str,
    hypothesis: &str,
) -> Result<CombinedFeatures> {
    let s = pool(&encoder.encode(source)?, pooling)?;
    let h = pool(&encoder.encode(hypothesis)?, pooling)?;
    combine(&h, &s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(v: &[f64]) -> SentenceEmbedding {
        SentenceEmbedding(v.to_vec())
    }

    #[test]
    fn pool_examples() {
        let one = vec![vec![0.3, -1.0]];
        assert_eq!(pool(&one, PoolingMode::Mean).unwrap().0, one[0]);
        assert_eq!(pool(&one, PoolingMode::FirstToken).unwrap().0, one[0]);
        let two = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(pool(&two, PoolingMode::Mean).unwrap().0, vec![0.5, 0.5]);
        let swapped = vec![two[1].clone(), two[0].clone()];
        assert_eq!(pool(&swapped, PoolingMode::Mean).unwrap(), pool(&two, PoolingMode::Mean).unwrap());
        assert!(matches!(pool(&[], PoolingMode::Mean), Err(Error::Empty(_))));
    }

    #[test]
    fn combine_examples() {
        let c = combine(&emb(&[1.0, 2.0]), &emb(&[3.0, 4.0])).unwrap();
        assert_eq!(c.0, vec![1.0, 2.0, 3.0, 4.0, 3.0, 8.0, 2.0, 2.0]);
        let same = combine(&emb(&[0.5, -2.0]), &emb(&[0.5, -2.0])).unwrap();
        assert!(same.0[6..].iter().all(|&v| v == 0.0));
        assert_eq!(combine(&emb(&[0.0; 16]), &emb(&[1.0; 16])).unwrap().0.len(), 64);
        assert!(combine(&emb(&[0.0; 2]), &emb(&[0.0; 3])).is_err());
    }

    #[test]
    fn empty_text_fails_at_pooling() {
        let e = crate::encoder::ToyEncoder::default();
        assert!(e.encode("").unwrap().is_empty());
        assert!(features_for(&e, PoolingMode::Mean, "", "heart").is_err());
    }
}
