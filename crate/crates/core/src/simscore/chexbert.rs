use crate::error::{Error, Result};
use log::warn;
use serde::{Deserialize, Serialize};

pub const PATHOLOGY_COUNT: usize = 14;

pub const CHEXPERT_LABELS: [&str; PATHOLOGY_COUNT] = [
    "Enlarged Cardiomediastinum",
    "Cardiomegaly",
    "Lung Opacity",
    "Lung Lesion",
    "Edema",
    "Consolidation",
    "Pneumonia",
    "Atelectasis",
    "Pneumothorax",
    "Pleural Effusion",
    "Pleural Other",
    "Fracture",
    "Support Devices",
    "No Finding",
];

/// Indicator vector over the 14 pathology labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathologyVector(Vec<f64>);

impl PathologyVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != PATHOLOGY_COUNT {
            return Err(Error::DimensionMismatch {
                expected: PATHOLOGY_COUNT,
                actual: values.len(),
            });
        }
        Ok(Self(values))
    }

    /// Parses a 14-character string of `0`/`1` digits, e.g. `"01000000000000"`.
    pub fn from_bits(bits: &str) -> Result<Self> {
        let values = bits
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(0.0),
                '1' => Ok(1.0),
                other => Err(Error::InvalidParameter(format!("pathology bit `{other}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Cosine similarity of two pathology vectors; 0 (with a warning) if either
/// vector is all zeros.
pub fn chexbert_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    for v in [a, b] {
        if v.len() != PATHOLOGY_COUNT {
            return Err(Error::DimensionMismatch {
                expected: PATHOLOGY_COUNT,
                actual: v.len(),
            });
        }
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        warn!("zero pathology vector; similarity defined as 0");
        return Ok(0.0);
    }
    Ok(dot / (na * nb))
}

const KEYWORDS: [&[&str]; PATHOLOGY_COUNT] = [
    &["mediastinal widening", "widened mediastinum", "enlarged cardiomediastinal"],
    &["cardiomegaly", "heart is enlarged", "enlarged heart", "enlargement of the cardiac"],
    &["opacity", "opacities", "infiltrate"],
    &["nodule", "mass", "lesion", "granuloma"],
    &["edema", "vascular congestion"],
    &["consolidation"],
    &["pneumonia"],
    &["atelectasis"],
    &["pneumothorax"],
    &["pleural effusion", "effusion"],
    &["pleural thickening", "blunting"],
    &["fracture"],
    &["catheter", "pacemaker", "tube", "sternotomy", "clips"],
    &[],
];

const NEGATIONS: [&str; 6] = ["no ", "without ", "negative for ", "free of ", "resolved ", "clear of "];

/// Keyword-rule stand-in for a learned pathology labeler. A keyword counts
/// as present unless a negation cue precedes it in the same sentence. "No
/// Finding" is set when nothing else is present.
pub fn label_pathologies(text: &str) -> PathologyVector {
    let lower = text.to_lowercase();
    let mut v = vec![0.0; PATHOLOGY_COUNT];
    for sentence in lower.split(['.', ';', '\n']) {
        let sentence = format!(" {} ", sentence.trim());
        for (i, kws) in KEYWORDS.iter().enumerate() {
            for kw in kws.iter() {
                if let Some(pos) = sentence.find(kw) {
                    let before = &sentence[..pos];
                    if !NEGATIONS.iter().any(|n| before.contains(n)) {
                        v[i] = 1.0;
                    }
                }
            }
        }
    }
    if v[..PATHOLOGY_COUNT - 1].iter().all(|&x| x == 0.0) {
        v[PATHOLOGY_COUNT - 1] = 1.0;
    }
    PathologyVector(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn onehot(idx: &[usize]) -> Vec<f64> {
        let mut v = vec![0.0; PATHOLOGY_COUNT];
        idx.iter().for_each(|&i| v[i] = 1.0);
        v
    }

    #[test]
    fn cosine_fixtures() {
        let a = onehot(&[1, 4]);
        assert!((chexbert_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(chexbert_similarity(&onehot(&[1]), &onehot(&[2])).unwrap(), 0.0);
        let s = chexbert_similarity(&onehot(&[0, 1]), &onehot(&[0])).unwrap();
        assert!((s - 1.0 / 2f64.sqrt()).abs() < 1e-9);
        assert_eq!(chexbert_similarity(&onehot(&[]), &onehot(&[3])).unwrap(), 0.0);
        assert!(chexbert_similarity(&[1.0; 13], &onehot(&[0])).is_err());
    }

    #[test]
    fn bits_parse() {
        let v = PathologyVector::from_bits("01000000000001").unwrap();
        assert_eq!(v.values()[1], 1.0);
        assert!(PathologyVector::from_bits("0101").is_err());
        assert!(PathologyVector::from_bits("0100000000000x").is_err());
    }

    #[test]
    fn labeler_negation_and_no_finding() {
        let v = label_pathologies("The heart is enlarged. No pneumothorax or pleural effusion.");
        assert_eq!(v.values()[1], 1.0);
        assert_eq!(v.values()[8], 0.0);
        assert_eq!(v.values()[9], 0.0);
        assert_eq!(v.values()[13], 0.0);
        let n = label_pathologies("Lungs are clear. No acute disease.");
        assert_eq!(n.values()[13], 1.0);
    }

    proptest::proptest! {
        #[test]
        fn permutation_invariant(a in proptest::collection::vec(0u8..2, 14), b in proptest::collection::vec(0u8..2, 14), rot in 0usize..14) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let mut pa = a.clone(); pa.rotate_left(rot);
            let mut pb = b.clone(); pb.rotate_left(rot);
            let s1 = chexbert_similarity(&a, &b).unwrap();
            let s2 = chexbert_similarity(&pa, &pb).unwrap();
            proptest::prop_assert!((s1 - s2).abs() < 1e-12);
        }
    }
}
