//! Comparing two dependent correlations that share one variable.
//!
//! Variable `j` is the human judgement, `k` the baseline metric and `h` the
//! candidate metric; the question is whether `r_jh > r_jk`.

use super::rank::pearson;
use crate::error::{Error, Result};
use crate::par;
use nalgebra::Matrix3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestVariant {
    /// Olkin's z as given by Hendrickson, Stanley and Hills (1970).
    #[default]
    OlkinZ,
    /// Hotelling's t with Williams' correction.
    #[serde(rename = "williams_t")]
    Williams,
    /// Hendrickson, Stanley and Hills' modification of Hotelling's t.
    #[serde(rename = "hendrickson_t")]
    Hendrickson,
}

impl TestVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            TestVariant::OlkinZ => "olkin_z",
            TestVariant::Williams => "williams_t",
            TestVariant::Hendrickson => "hendrickson_t",
        }
    }
}

impl std::str::FromStr for TestVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "olkin_z" | "olkin" => Ok(TestVariant::OlkinZ),
            "williams_t" | "williams" | "hotelling_williams" => Ok(TestVariant::Williams),
            "hendrickson_t" | "hendrickson" => Ok(TestVariant::Hendrickson),
            other => Err(Error::InvalidParameter(format!("unknown test variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    #[default]
    OneSidedJhGreater,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapTestInput {
    pub r_jk: f64,
    pub r_jh: f64,
    pub r_kh: f64,
    pub n: usize,
    pub alpha: f64,
    pub alternative: Alternative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverlapTestResult {
    pub variant: TestVariant,
    pub statistic: f64,
    /// p for the requested alternative.
    pub p_value: f64,
    pub p_one_sided: f64,
    pub reject: bool,
}

/// The JSON shape written for a significance run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub variant: String,
    pub statistic: f64,
    pub p: f64,
    pub alpha: f64,
    pub reject: bool,
}

impl OverlapTestResult {
    pub fn report(&self, alpha: f64) -> SignificanceReport {
        SignificanceReport {
            variant: self.variant.as_str().to_string(),
            statistic: self.statistic,
            p: self.p_value,
            alpha,
            reject: self.reject,
        }
    }
}

fn determinant(r_jk: f64, r_jh: f64, r_kh: f64) -> f64 {
    1.0 - r_jk * r_jk - r_jh * r_jh - r_kh * r_kh + 2.0 * r_jk * r_jh * r_kh
}

fn validate(input: &OverlapTestInput) -> Result<()> {
    let OverlapTestInput { r_jk, r_jh, r_kh, n, alpha, .. } = *input;
    for r in [r_jk, r_jh, r_kh] {
        if !(r.is_finite() && r.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!("correlation {r} must lie in (-1, 1)")));
        }
    }
    if n < 4 {
        return Err(Error::TooFewObservations { required: 4, actual: n });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} must lie in (0, 1)")));
    }
    if determinant(r_jk, r_jh, r_kh) < 0.0 {
        return Err(Error::NotPositiveSemidefinite { r_jk, r_jh, r_kh });
    }
    Ok(())
}

fn statistic(variant: TestVariant, r_jk: f64, r_jh: f64, r_kh: f64, n: f64) -> f64 {
    let diff = r_jh - r_jk;
    let det = determinant(r_jk, r_jh, r_kh);
    match variant {
        TestVariant::OlkinZ => {
            let var = (1.0 - r_jk * r_jk).powi(2) + (1.0 - r_jh * r_jh).powi(2)
                - 2.0 * r_kh.powi(3)
                - (2.0 * r_kh - r_jk * r_jh) * (1.0 - r_kh * r_kh - r_jk * r_jk - r_jh * r_jh);
            diff * n.sqrt() / var.sqrt()
        }
        TestVariant::Williams => {
            let rbar = (r_jk + r_jh) / 2.0;
            let den = 2.0 * det * (n - 1.0) / (n - 3.0) + rbar * rbar * (1.0 - r_kh).powi(3);
            diff * ((n - 1.0) * (1.0 + r_kh)).sqrt() / den.sqrt()
        }
        TestVariant::Hendrickson => {
            let den = 2.0 * det + diff * diff * (1.0 - r_kh).powi(3) / (4.0 * (n - 1.0));
            diff * ((n - 3.0) * (1.0 + r_kh)).sqrt() / den.sqrt()
        }
    }
}

/// Tests `r_jh > r_jk` (or inequality, two-sided); rejects iff `p < alpha`.
pub fn dependent_overlapping_test(input: &OverlapTestInput, variant: TestVariant) -> Result<OverlapTestResult> {
    validate(input)?;
    let n = input.n as f64;
    let stat = statistic(variant, input.r_jk, input.r_jh, input.r_kh, n);
    if !stat.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "{} statistic is undefined for ({}, {}, {})",
            variant.as_str(),
            input.r_jk,
            input.r_jh,
            input.r_kh
        )));
    }
    let p_one = match variant {
        TestVariant::OlkinZ => Normal::standard().sf(stat),
        TestVariant::Williams | TestVariant::Hendrickson => StudentsT::new(0.0, 1.0, n - 3.0)
            .expect("n >= 4 gives positive degrees of freedom")
            .sf(stat),
    };
    let p_value = match input.alternative {
        Alternative::OneSidedJhGreater => p_one,
        Alternative::TwoSided => (2.0 * p_one.min(1.0 - p_one)).min(1.0),
    };
    Ok(OverlapTestResult {
        variant,
        statistic: stat,
        p_value,
        p_one_sided: p_one,
        reject: p_value < input.alpha,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub r_kh: f64,
    /// `None` where the triple is not positive semidefinite.
    pub statistic: Option<f64>,
    pub p_one_sided: Option<f64>,
}

/// One-sided p across `r_kh` values `lo, lo+step, ..., hi`.
pub fn rkh_sweep(r_jk: f64, r_jh: f64, n: usize, variant: TestVariant, lo: f64, hi: f64, step: f64) -> Vec<SweepRow> {
    let steps = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=steps)
        .map(|i| {
            let r_kh = ((lo + i as f64 * step) * 1e6).round() / 1e6;
            let input = OverlapTestInput {
                r_jk,
                r_jh,
                r_kh,
                n,
                alpha: 0.05,
                alternative: Alternative::OneSidedJhGreater,
            };
            let res = dependent_overlapping_test(&input, variant).ok();
            SweepRow {
                r_kh,
                statistic: res.map(|r| r.statistic),
                p_one_sided: res.map(|r| r.p_one_sided),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub replicates: usize,
    pub rejections: usize,
    pub rate: f64,
    /// Normal-approximation 95% interval around alpha for this many replicates.
    pub interval: (f64, f64),
}

impl CalibrationResult {
    pub fn within_interval(&self) -> bool {
        self.interval.0 <= self.rate && self.rate <= self.interval.1
    }
}

/// `p ± 1.96·sqrt(p(1−p)/n)`.
pub fn binomial_interval(p: f64, replicates: usize) -> (f64, f64) {
    let half = 1.959_963_984_540_054 * (p * (1.0 - p) / replicates as f64).sqrt();
    (p - half, p + half)
}

/// Simulates trivariate normal samples with `r_jk = r_jh = r` and the given
/// `r_kh`, runs the one-sided test on the sample correlations, and returns
/// the rejection rate. Replicate `i` draws from stream `i` of the seed, so
/// the result does not depend on thread count.
pub fn null_rejection_rate(
    r: f64,
    r_kh: f64,
    n: usize,
    alpha: f64,
    replicates: usize,
    seed: u64,
    variant: TestVariant,
) -> Result<CalibrationResult> {
    validate(&OverlapTestInput {
        r_jk: r,
        r_jh: r,
        r_kh,
        n,
        alpha,
        alternative: Alternative::OneSidedJhGreater,
    })?;
    if replicates == 0 {
        return Err(Error::Empty("replicates"));
    }
    // Variable order (j, k, h).
    let sigma = Matrix3::new(1.0, r, r, r, 1.0, r_kh, r, r_kh, 1.0);
    let l = sigma
        .cholesky()
        .ok_or(Error::NotPositiveSemidefinite { r_jk: r, r_jh: r, r_kh })?
        .l();
    let outcomes = par::map_range(replicates, |i| -> Result<bool> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut cols = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for t in 0..n {
            let z = nalgebra::Vector3::from_fn(|_, _| StandardNormal.sample(&mut rng));
            let x: nalgebra::Vector3<f64> = l * z;
            for v in 0..3 {
                cols[v][t] = x[v];
            }
        }
        let r_jk = pearson(&cols[0], &cols[1])?.unwrap_or(0.0);
        let r_jh = pearson(&cols[0], &cols[2])?.unwrap_or(0.0);
        let r_kh_hat = pearson(&cols[1], &cols[2])?.unwrap_or(0.0);
        let input = OverlapTestInput {
            r_jk,
            r_jh,
            r_kh: r_kh_hat,
            n,
            alpha,
            alternative: Alternative::OneSidedJhGreater,
        };
        Ok(dependent_overlapping_test(&input, variant)?.reject)
    });
    let mut rejections = 0;
    for o in outcomes {
        rejections += usize::from(o?);
    }
    Ok(CalibrationResult {
        replicates,
        rejections,
        rate: rejections as f64 / replicates as f64,
        interval: binomial_interval(alpha, replicates),
    })
}
