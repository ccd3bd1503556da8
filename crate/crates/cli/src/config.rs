//! Pipeline configuration, read from one TOML file.

use anyhow::Context;
use radeval_core::analysis::{Alternative, TestVariant};
use radeval_core::corpus::{InputFormat, LoadOptions};
use radeval_core::estimator::{OptimizerKind, PoolingMode, TrainingConfig};
use radeval_core::pairgen::{DecileScope, Strategy};
use radeval_core::simscore::RadCliqCoefficients;
use radeval_core::ScoreKind;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; stage seeds default to it.
    pub seed: u64,
    #[serde(default = "default_run_dir")]
    pub run_dir: PathBuf,
    pub paths: Paths,
    #[serde(default)]
    pub curate: CurateConfig,
    #[serde(default)]
    pub clustering: ClusteringConfig,
    #[serde(default)]
    pub pairs: PairsConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub training: TrainSection,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

fn default_run_dir() -> PathBuf {
    "run".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub reports: PathBuf,
    pub lexicon: PathBuf,
    /// CSV with `id, ground_truth, generated[, oracle]`.
    pub generated: Option<PathBuf>,
    /// Long-format annotation CSV.
    pub annotations: Option<PathBuf>,
    pub format: Option<InputFormat>,
    #[serde(default)]
    pub load: LoadOptions,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurateConfig {
    /// Phrases added to the built-in normal-impression list.
    pub extra_phrases: Vec<String>,
    /// Drop reports without a second MeSH label.
    pub require_secondary_mesh: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub seed: Option<u64>,
    pub idf: bool,
    pub l2_normalize: bool,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            k_min: 2,
            k_max: 10,
            seed: None,
            idf: true,
            l2_normalize: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairsConfig {
    pub metric: ScoreKind,
    pub radcliq: RadCliqCoefficients,
    pub decile_scope: DecileScope,
    pub top_fraction: f64,
}

impl Default for PairsConfig {
    fn default() -> Self {
        Self {
            metric: ScoreKind::Radcliq,
            radcliq: RadCliqCoefficients::default(),
            decile_scope: DecileScope::default(),
            top_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub corpus: Strategy,
    pub test_fraction: f64,
    pub validation_fraction: f64,
    pub seed: Option<u64>,
    /// Allowed gap, in percentage points, between a split's abnormal share
    /// and the whole corpus.
    pub tolerance_pp: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            corpus: Strategy::TopDecile,
            test_fraction: 0.2,
            validation_fraction: 0.2,
            seed: None,
            tolerance_pp: 2.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub encoder: String,
    pub max_epochs: usize,
    /// 0 means full batch.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden_sizes: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub patience: Option<usize>,
    pub optimizer: OptimizerKind,
    pub pooling: PoolingMode,
    pub fine_tune_encoder: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainingConfig::default();
        Self {
            encoder: "toy-hash-32".into(),
            max_epochs: d.max_epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            hidden_sizes: d.hidden_sizes,
            seed: None,
            patience: d.patience,
            optimizer: d.optimizer,
            pooling: d.pooling,
            fine_tune_encoder: d.fine_tune_encoder,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Comparison {
    pub label: String,
    pub r_jk: f64,
    pub r_jh: f64,
    pub r_kh: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub alpha: f64,
    pub variant: TestVariant,
    pub alternative: Alternative,
    pub noisy_threshold: f64,
    /// Extra tests on given correlations, run by `sigtest`.
    pub comparisons: Vec<Comparison>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            variant: TestVariant::OlkinZ,
            alternative: Alternative::OneSidedJhGreater,
            noisy_threshold: 3.0,
            comparisons: Vec::new(),
        }
    }
}

impl PipelineConfig {
    /// Loads the file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.run_dir);
        resolve(&mut cfg.paths.reports);
        resolve(&mut cfg.paths.lexicon);
        cfg.paths.generated.as_mut().map(resolve);
        cfg.paths.annotations.as_mut().map(resolve);
        Ok(cfg)
    }

    pub fn clustering_seed(&self) -> u64 {
        self.clustering.seed.unwrap_or(self.seed)
    }

    pub fn split_seed(&self) -> u64 {
        self.split.seed.unwrap_or(self.seed)
    }

    pub fn training_config(&self) -> TrainingConfig {
        let t = &self.training;
        TrainingConfig {
            max_epochs: t.max_epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            hidden_sizes: t.hidden_sizes.clone(),
            seed: t.seed.unwrap_or(self.seed),
            patience: t.patience,
            optimizer: t.optimizer,
            pooling: t.pooling,
            fine_tune_encoder: t.fine_tune_encoder,
        }
    }

    pub fn reports_format(&self) -> InputFormat {
        self.paths
            .format
            .unwrap_or_else(|| InputFormat::from_path(&self.paths.reports))
    }
}
