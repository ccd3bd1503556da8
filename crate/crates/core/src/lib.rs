//! Tooling for building and validating a learned, referenceless quality metric
//! for generated radiology reports.
//!
//! The pipeline runs in stages:
//!
//! - [`corpus`]: load report collections, clean MeSH labels, classify normalcy.
//! - [`clustering`]: vectorize MeSH labels, K-Means, cluster-count selection, PCA.
//! - [`simscore`]: pairwise report similarity (BLEU, RadGraph F1, CheXbert
//!   cosine, embedding similarity, RadCliQ).
//! - [`pairgen`]: scored report-pair corpora, stratified splits, MeSH overlap audit.
//! - [`estimator`]: pooled sentence embeddings, combined features, feed-forward
//!   regressor, MSE training with Kendall-τ checkpoint selection, inference.
//! - [`analysis`]: rank correlations, annotation aggregation, dependent
//!   overlapping correlation tests.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the `parallel`
//! feature is enabled (the default) and falls back to sequential iteration
//! otherwise. Results are identical either way.

pub mod analysis;
pub mod clustering;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod estimator;
pub mod pairgen;
pub mod par;
pub mod simscore;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Direction in which a score improves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    LowerBetter,
    HigherBetter,
}

impl Orientation {
    pub fn as_str(self) -> &'static str {
        match self {
            Orientation::LowerBetter => "lower_better",
            Orientation::HigherBetter => "higher_better",
        }
    }

    /// Returns true when `a` is a strictly better score than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Orientation::LowerBetter => a < b,
            Orientation::HigherBetter => a > b,
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lower_better" | "lower" => Ok(Orientation::LowerBetter),
            "higher_better" | "higher" => Ok(Orientation::HigherBetter),
            other => Err(Error::UnknownOrientation(other.to_string())),
        }
    }
}

/// Which similarity score a pair corpus (and a checkpoint trained on it) carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    Radcliq,
    RadgraphF1,
}

impl ScoreKind {
    pub fn orientation(self) -> Orientation {
        match self {
            ScoreKind::Radcliq => Orientation::LowerBetter,
            ScoreKind::RadgraphF1 => Orientation::HigherBetter,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::Radcliq => "radcliq",
            ScoreKind::RadgraphF1 => "radgraph_f1",
        }
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "radcliq" => Ok(ScoreKind::Radcliq),
            "radgraph_f1" | "radgraph" => Ok(ScoreKind::RadgraphF1),
            other => Err(Error::UnknownScoreKind(other.to_string())),
        }
    }
}
