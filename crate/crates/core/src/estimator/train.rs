//! MSE training of the regression head with Kendall-τ checkpoint selection.

use super::checkpoint::EstimatorCheckpoint;
use super::regressor::{Adam, Regressor};
use super::{features_for, PoolingMode};
use crate::analysis::kendall_tau;
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::{par, ScoreKind};
use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::BufRead;
use std::path::Path;

/// One `{src, mt, score}` training line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub src: String,
    pub mt: String,
    pub score: f64,
}

pub fn read_training_jsonl(path: &Path) -> Result<Vec<TrainingExample>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: TrainingExample = serde_json::from_str(&line).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        out.push(ex);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub max_epochs: usize,
    /// 0 means full batch.
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Hidden layer widths; `None` means `[2d, d]` for encoder dimension d.
    pub hidden_sizes: Option<Vec<usize>>,
    pub seed: u64,
    /// Stop after this many epochs without a τ improvement.
    pub patience: Option<usize>,
    pub optimizer: OptimizerKind,
    pub pooling: PoolingMode,
    pub fine_tune_encoder: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            max_epochs: 40,
            batch_size: 32,
            learning_rate: 1e-3,
            hidden_sizes: None,
            seed: 0,
            patience: None,
            optimizer: OptimizerKind::Adam,
            pooling: PoolingMode::Mean,
            fine_tune_encoder: false,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::InvalidParameter("max_epochs must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidParameter(format!("learning rate {}", self.learning_rate)));
        }
        if self.hidden_sizes.as_ref().is_some_and(|h| h.contains(&0)) {
            return Err(Error::InvalidParameter("hidden layer of width 0".into()));
        }
        Ok(())
    }

    pub fn hidden_for(&self, d: usize) -> Vec<usize> {
        self.hidden_sizes.clone().unwrap_or_else(|| vec![2 * d, d])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean squared error over the whole training set after the epoch.
    pub train_loss: f64,
    pub validation_loss: f64,
    /// `None` when τ is undefined (a constant ranking).
    pub validation_tau: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub history: Vec<EpochRecord>,
    /// 1-based epoch of the selected weights.
    pub selected_epoch: usize,
    /// Weights after every epoch, in order.
    pub epoch_weights: Vec<Regressor>,
}

impl TrainingOutcome {
    pub fn selected(&self) -> &Regressor {
        &self.epoch_weights[self.selected_epoch - 1]
    }
}

/// Encodes every example into combined features and targets.
pub fn encode_features(
    examples: &[TrainingExample],
    encoder: &dyn Encoder,
    pooling: PoolingMode,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let xs = par::try_map(examples, |ex| features_for(encoder, pooling, &ex.src, &ex.mt).map(|f| f.0))?;
    Ok((xs, examples.iter().map(|e| e.score).collect()))
}

/// Selects the epoch with maximal τ (earliest on ties); when τ is undefined
/// for every epoch, the epoch with minimal validation loss.
pub fn select_epoch(history: &[EpochRecord]) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for r in history {
        if let Some(t) = r.validation_tau {
            if best.is_none_or(|(_, b)| t > b) {
                best = Some((r.epoch, t));
            }
        }
    }
    if let Some((e, _)) = best {
        return e;
    }
    warn!("validation τ undefined for every epoch; selecting by validation loss");
    let mut best = &history[0];
    for r in history {
        if r.validation_loss < best.validation_loss {
            best = r;
        }
    }
    best.epoch
}

/// Trains the regression head on precomputed features.
pub fn fit(
    train_x: &[Vec<f64>],
    train_y: &[f64],
    val_x: &[Vec<f64>],
    val_y: &[f64],
    config: &TrainingConfig,
) -> Result<TrainingOutcome> {
    config.validate()?;
    if train_x.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    if val_x.is_empty() {
        return Err(Error::Empty("validation corpus"));
    }
    for (a, b) in [(train_x.len(), train_y.len()), (val_x.len(), val_y.len())] {
        if a != b {
            return Err(Error::LengthMismatch { left: a, right: b });
        }
    }
    let dim = train_x[0].len();
    if !dim.is_multiple_of(4) {
        return Err(Error::InvalidParameter(format!("feature dimension {dim} is not 4d")));
    }
    let mut model = Regressor::new(dim, &config.hidden_for(dim / 4), config.seed);
    let mut adam = Adam::new(model.num_params(), config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x05ee_d0fb_a7c4);
    let batch = if config.batch_size == 0 {
        train_x.len()
    } else {
        config.batch_size.min(train_x.len())
    };
    let train_views: Vec<&[f64]> = train_x.iter().map(Vec::as_slice).collect();
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut history = Vec::new();
    let mut weights = Vec::new();
    let mut last_finite = None;
    let mut best_tau = f64::NEG_INFINITY;
    let mut since_best = 0;

    for epoch in 1..=config.max_epochs {
        if batch < train_x.len() {
            order.shuffle(&mut rng);
        }
        for (b, chunk) in order.chunks(batch).enumerate() {
            let xs: Vec<&[f64]> = chunk.iter().map(|&i| train_views[i]).collect();
            let ys: Vec<f64> = chunk.iter().map(|&i| train_y[i]).collect();
            let (loss, grad) = model.mse_gradient(&xs, &ys)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    last_finite,
                });
            }
            last_finite = Some(loss);
            match config.optimizer {
                OptimizerKind::Adam => adam.step(model.params_mut(), &grad),
                OptimizerKind::Sgd => model
                    .params_mut()
                    .iter_mut()
                    .zip(&grad)
                    .for_each(|(p, g)| *p -= config.learning_rate * g),
            }
        }
        let train_loss = model.mse(&train_views, train_y)?;
        if !train_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: usize::MAX,
                last_finite,
            });
        }
        let preds = model.predict_batch(val_x)?;
        let validation_loss = preds.iter().zip(val_y).map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / val_y.len() as f64;
        let validation_tau = if val_y.len() >= 2 { kendall_tau(&preds, val_y)? } else { None };
        info!("epoch {epoch}: train mse {train_loss:.6}, validation mse {validation_loss:.6}, tau {validation_tau:?}");
        history.push(EpochRecord {
            epoch,
            train_loss,
            validation_loss,
            validation_tau,
        });
        weights.push(model.clone());

        if let Some(p) = config.patience {
            match validation_tau {
                Some(t) if t > best_tau => {
                    best_tau = t;
                    since_best = 0;
                }
                _ => since_best += 1,
            }
            if since_best >= p {
                info!("no τ improvement for {p} epochs; stopping after epoch {epoch}");
                break;
            }
        }
    }
    let selected_epoch = select_epoch(&history);
    Ok(TrainingOutcome {
        history,
        selected_epoch,
        epoch_weights: weights,
    })
}

/// Encodes both corpora with `encoder` and trains; returns the outcome and
/// a checkpoint for the selected epoch.
pub fn train(
    train_set: &[TrainingExample],
    validation_set: &[TrainingExample],
    encoder: &dyn Encoder,
    score_kind: ScoreKind,
    config: &TrainingConfig,
) -> Result<(TrainingOutcome, EstimatorCheckpoint)> {
    config.validate()?;
    if config.fine_tune_encoder && !encoder.trainable() {
        return Err(Error::InvalidParameter(format!(
            "encoder `{}` has no trainable parameters; disable fine_tune_encoder",
            encoder.id()
        )));
    }
    if train_set.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    if validation_set.is_empty() {
        return Err(Error::Empty("validation corpus"));
    }
    let (tx, ty) = encode_features(train_set, encoder, config.pooling)?;
    let (vx, vy) = encode_features(validation_set, encoder, config.pooling)?;
    let outcome = fit(&tx, &ty, &vx, &vy, config)?;
    let selected = outcome.selected().clone();
    let preds = selected.predict_batch(&vx)?;
    let checkpoint = EstimatorCheckpoint::new(
        selected,
        encoder.id(),
        score_kind,
        config.clone(),
        &outcome,
        Some(typical_range(&preds)),
    );
    Ok((outcome, checkpoint))
}

/// 5th and 95th percentile (nearest rank) of a set of predictions.
pub fn typical_range(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |q: f64| v[((q * (v.len() - 1) as f64).round() as usize).min(v.len() - 1)];
    (at(0.05), at(0.95))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(epoch: usize, loss: f64, tau: Option<f64>) -> EpochRecord {
        EpochRecord {
            epoch,
            train_loss: loss,
            validation_loss: loss,
            validation_tau: tau,
        }
    }

    #[test]
    fn selection_prefers_earliest_max_tau() {
        let h = vec![rec(1, 1.0, Some(0.5)), rec(2, 0.5, Some(0.8)), rec(3, 0.4, Some(0.8)), rec(4, 0.3, Some(0.7))];
        assert_eq!(select_epoch(&h), 2);
    }

    #[test]
    fn selection_falls_back_to_loss() {
        let h = vec![rec(1, 1.0, None), rec(2, 0.2, None), rec(3, 0.2, None)];
        assert_eq!(select_epoch(&h), 2);
    }

    #[test]
    fn constant_targets_leave_tau_undefined() {
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 20.0; 8]).collect();
        let ys = vec![1.0; 20];
        let cfg = TrainingConfig {
            max_epochs: 3,
            ..Default::default()
        };
        let out = fit(&xs, &ys, &xs, &ys, &cfg).unwrap();
        assert!(out.history.iter().all(|r| r.validation_tau.is_none()));
        let best = out
            .history
            .iter()
            .min_by(|a, b| a.validation_loss.total_cmp(&b.validation_loss))
            .unwrap();
        assert_eq!(out.selected_epoch, best.epoch);
    }

    #[test]
    fn empty_validation_is_an_error() {
        let xs = vec![vec![0.0; 4]];
        assert!(matches!(
            fit(&xs, &[1.0], &[], &[], &TrainingConfig::default()),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn divergence_aborts_with_diagnostics() {
        let xs: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64; 4]).collect();
        let ys: Vec<f64> = (0..8).map(|i| i as f64 * 1e200).collect();
        let err = fit(&xs, &ys, &xs, &ys, &TrainingConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { epoch: 1, .. }), "{err}");
    }

    #[test]
    fn patience_stops_early() {
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 10.0; 4]).collect();
        let ys = vec![0.0; 10];
        let cfg = TrainingConfig {
            patience: Some(2),
            ..Default::default()
        };
        assert_eq!(fit(&xs, &ys, &xs, &ys, &cfg).unwrap().history.len(), 2);
    }

    #[test]
    fn fine_tune_rejected_for_frozen_encoder() {
        let enc = crate::encoder::ToyEncoder::default();
        let ex = vec![TrainingExample {
            src: "a".into(),
            mt: "b".into(),
            score: 0.0,
        }];
        let cfg = TrainingConfig {
            fine_tune_encoder: true,
            ..Default::default()
        };
        assert!(train(&ex, &ex, &enc, ScoreKind::Radcliq, &cfg).is_err());
    }
}
