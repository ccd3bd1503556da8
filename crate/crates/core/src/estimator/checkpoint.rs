//! Checkpoint persistence and inference.

use super::regressor::Regressor;
use super::train::{TrainingConfig, TrainingOutcome};
use super::{features_for, PoolingMode};
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::{par, Orientation, ScoreKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

const WEIGHTS_FILE: &str = "weights.bin";
const MANIFEST_FILE: &str = "manifest.json";
const EPOCH_DIR: &str = "epochs";

/// Head choices that are not pinned down by the reference architecture.
const UNVERIFIED_CHOICES: [&str; 2] = ["pooling", "hidden_sizes"];

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorCheckpoint {
    pub regressor: Regressor,
    pub encoder_id: String,
    pub pooling: PoolingMode,
    pub score_kind: ScoreKind,
    pub orientation: Orientation,
    /// 1-based epoch these weights come from.
    pub epoch: usize,
    pub validation_tau_history: Vec<Option<f64>>,
    pub train_loss_history: Vec<f64>,
    pub typical_range: Option<(f64, f64)>,
    pub config: TrainingConfig,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    encoder_id: String,
    pooling: PoolingMode,
    score_kind: ScoreKind,
    orientation: Orientation,
    selected_epoch: usize,
    validation_tau_history: Vec<Option<f64>>,
    train_loss_history: Vec<f64>,
    typical_range: Option<(f64, f64)>,
    layer_shapes: Vec<(usize, usize)>,
    weights_sha256: String,
    config: TrainingConfig,
    config_hash: String,
    unverified_choices: Vec<String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn to_bytes(params: &[f64]) -> Vec<u8> {
    params.iter().flat_map(|p| p.to_le_bytes()).collect()
}

fn from_bytes(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::Checkpoint(format!("weights blob has {} bytes", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadEvalScore {
    pub score: f64,
    pub orientation: Orientation,
}

impl EstimatorCheckpoint {
    pub fn new(
        regressor: Regressor,
        encoder_id: &str,
        score_kind: ScoreKind,
        config: TrainingConfig,
        outcome: &TrainingOutcome,
        typical_range: Option<(f64, f64)>,
    ) -> Self {
        Self {
            regressor,
            encoder_id: encoder_id.to_string(),
            pooling: config.pooling,
            score_kind,
            orientation: score_kind.orientation(),
            epoch: outcome.selected_epoch,
            validation_tau_history: outcome.history.iter().map(|r| r.validation_tau).collect(),
            train_loss_history: outcome.history.iter().map(|r| r.train_loss).collect(),
            typical_range,
            config,
        }
    }

    /// Hash over the training configuration, encoder and target.
    pub fn config_hash(&self) -> String {
        let key = serde_json::json!({
            "config": self.config,
            "encoder_id": self.encoder_id,
            "score_kind": self.score_kind,
        });
        sha256_hex(key.to_string().as_bytes())
    }

    /// Writes `weights.bin` (little-endian f64) and `manifest.json`; with
    /// `outcome`, also every epoch's weights under `epochs/`.
    pub fn save(&self, dir: &Path, outcome: Option<&TrainingOutcome>) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let blob = to_bytes(self.regressor.params());
        let path = dir.join(WEIGHTS_FILE);
        std::fs::write(&path, &blob).map_err(|e| Error::io(&path, e))?;
        if let Some(outcome) = outcome {
            let epochs = dir.join(EPOCH_DIR);
            std::fs::create_dir_all(&epochs).map_err(|e| Error::io(&epochs, e))?;
            for (i, w) in outcome.epoch_weights.iter().enumerate() {
                let p = epochs.join(format!("epoch_{:03}.bin", i + 1));
                std::fs::write(&p, to_bytes(w.params())).map_err(|e| Error::io(&p, e))?;
            }
        }
        let manifest = Manifest {
            encoder_id: self.encoder_id.clone(),
            pooling: self.pooling,
            score_kind: self.score_kind,
            orientation: self.orientation,
            selected_epoch: self.epoch,
            validation_tau_history: self.validation_tau_history.clone(),
            train_loss_history: self.train_loss_history.clone(),
            typical_range: self.typical_range,
            layer_shapes: self.regressor.shapes().to_vec(),
            weights_sha256: sha256_hex(&blob),
            config: self.config.clone(),
            config_hash: self.config_hash(),
            unverified_choices: UNVERIFIED_CHOICES.iter().map(|s| s.to_string()).collect(),
        };
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.clone(),
            line: 0,
            source,
        })?;
        let path = dir.join(WEIGHTS_FILE);
        let blob = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if sha256_hex(&blob) != m.weights_sha256 {
            return Err(Error::Checkpoint("weights blob does not match its recorded digest".into()));
        }
        if m.orientation != m.score_kind.orientation() {
            return Err(Error::Checkpoint(format!(
                "orientation {} contradicts score kind {}",
                m.orientation, m.score_kind
            )));
        }
        let regressor = Regressor::from_parts(m.layer_shapes, from_bytes(&blob)?)?;
        Ok(Self {
            regressor,
            encoder_id: m.encoder_id,
            pooling: m.pooling,
            score_kind: m.score_kind,
            orientation: m.orientation,
            epoch: m.selected_epoch,
            validation_tau_history: m.validation_tau_history,
            train_loss_history: m.train_loss_history,
            typical_range: m.typical_range,
            config: m.config,
        })
    }

    fn check_encoder(&self, encoder: &dyn Encoder) -> Result<()> {
        if encoder.id() != self.encoder_id {
            return Err(Error::EncoderMismatch {
                expected: self.encoder_id.clone(),
                actual: encoder.id().to_string(),
            });
        }
        Ok(())
    }
}

/// Scores `generated` against `ground_truth`; ground truth is the source side.
pub fn radeval_score(
    checkpoint: &EstimatorCheckpoint,
    encoder: &dyn Encoder,
    ground_truth: &str,
    generated: &str,
) -> Result<RadEvalScore> {
    checkpoint.check_encoder(encoder)?;
    let f = features_for(encoder, checkpoint.pooling, ground_truth, generated)?;
    Ok(RadEvalScore {
        score: checkpoint.regressor.forward(&f.0)?,
        orientation: checkpoint.orientation,
    })
}

/// Scores `(ground_truth, generated)` pairs in parallel, in input order.
pub fn radeval_score_batch(
    checkpoint: &EstimatorCheckpoint,
    encoder: &dyn Encoder,
    pairs: &[(String, String)],
) -> Result<Vec<RadEvalScore>> {
    checkpoint.check_encoder(encoder)?;
    par::try_map(pairs, |(gt, gen)| radeval_score(checkpoint, encoder, gt, gen))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::ToyEncoder;
    use crate::estimator::{train, TrainingExample};

    fn tiny() -> (TrainingOutcome, EstimatorCheckpoint) {
        let words = ["effusion", "clear", "opacity", "normal", "heart", "enlarged"];
        let ex: Vec<TrainingExample> = (0..12)
            .map(|i| TrainingExample {
                src: format!("{} {}", words[i % 6], words[(i + 1) % 6]),
                mt: format!("{} {}", words[(i + 2) % 6], words[i % 6]),
                score: i as f64 / 12.0,
            })
            .collect();
        let cfg = TrainingConfig {
            max_epochs: 3,
            ..Default::default()
        };
        train(&ex, &ex, &ToyEncoder::default(), ScoreKind::Radcliq, &cfg).unwrap()
    }

    #[test]
    fn round_trip_and_corruption() {
        let (outcome, ck) = tiny();
        let dir = tempfile::tempdir().unwrap();
        ck.save(dir.path(), Some(&outcome)).unwrap();
        assert!(dir.path().join("epochs/epoch_003.bin").exists());
        assert_eq!(EstimatorCheckpoint::load(dir.path()).unwrap(), ck);
        std::fs::write(dir.path().join(WEIGHTS_FILE), [0u8; 16]).unwrap();
        assert!(matches!(EstimatorCheckpoint::load(dir.path()), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn scoring_checks_encoder_and_is_order_invariant() {
        let (_, ck) = tiny();
        assert_eq!(ck.orientation, Orientation::LowerBetter);
        let enc = ToyEncoder::default();
        assert!(matches!(
            radeval_score(&ck, &ToyEncoder::new(16), "a", "b"),
            Err(Error::EncoderMismatch { .. })
        ));
        let pairs = vec![
            ("heart normal".to_string(), "heart enlarged".to_string()),
            ("clear".to_string(), "opacity".to_string()),
            ("heart normal".to_string(), "heart enlarged".to_string()),
        ];
        let s = radeval_score_batch(&ck, &enc, &pairs).unwrap();
        assert_eq!(s[0], s[2]);
        let rev: Vec<_> = pairs.iter().rev().cloned().collect();
        let r = radeval_score_batch(&ck, &enc, &rev).unwrap();
        assert_eq!(s[1], r[1]);
        assert_eq!(s[0], r[2]);
    }
}
