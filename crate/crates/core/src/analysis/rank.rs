use crate::error::{Error, Result};
use crate::{par, Orientation};
use log::warn;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMethod {
    Spearman,
    Kendall,
}

impl CorrelationMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            CorrelationMethod::Spearman => "spearman",
            CorrelationMethod::Kendall => "kendall",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    /// `None` when undefined (constant input).
    pub coefficient: Option<f64>,
    pub n: usize,
    pub method: CorrelationMethod,
    pub orientation_applied: bool,
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::TooFewObservations {
            required: 2,
            actual: x.len(),
        });
    }
    Ok(())
}

/// 1-based ranks, ties receiving the average of the ranks they span.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Pearson correlation; `None` if either input is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    check_pair(x, y)?;
    pearson(&ranks(x), &ranks(y))
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    Ok(CorrelationResult {
        coefficient: spearman_rho(x, y)?,
        n: x.len(),
        method: CorrelationMethod::Spearman,
        orientation_applied: false,
    })
}

/// Number of tied pairs within runs of equal values in a sorted sequence.
fn tied_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Sorts `v` and returns the number of inversions.
fn merge_count(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], buf) + merge_count(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall τ-b in O(n log n); `None` if either input is constant.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    check_pair(x, y)?;
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::InvalidParameter("NaN in rank correlation input".into()));
    }
    let n = x.len() as u64;
    let n0 = n * (n - 1) / 2;
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let n1 = tied_pairs(&xs);
    let n3 = tied_pairs(&pairs);
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = Vec::with_capacity(ys.len());
    let swaps = merge_count(&mut ys, &mut buf);
    let n2 = tied_pairs(&ys);
    if n0 == n1 || n0 == n2 {
        return Ok(None);
    }
    let num = n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    let den = ((n0 - n1) as f64).sqrt() * ((n0 - n2) as f64).sqrt();
    Ok(Some((num / den).clamp(-1.0, 1.0)))
}

/// Negates higher-is-better scores so that every score grows with error counts.
pub fn orient_scores(scores: &[f64], orientation: Orientation) -> Vec<f64> {
    match orientation {
        Orientation::LowerBetter => scores.to_vec(),
        Orientation::HigherBetter => scores.iter().map(|s| -s).collect(),
    }
}

/// `100·ρ` with two decimals, `NA` when undefined.
pub fn percent(coefficient: Option<f64>) -> String {
    coefficient.map_or_else(|| "NA".to_string(), |c| format!("{:.2}", 100.0 * c))
}

fn correlate(method: CorrelationMethod, x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    match method {
        CorrelationMethod::Spearman => spearman_rho(x, y),
        CorrelationMethod::Kendall => kendall_tau(x, y),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricCorrelation {
    pub column: String,
    pub reference: String,
    pub result: CorrelationResult,
    /// The checkpoint was trained on this column.
    pub training_target: bool,
}

/// Correlates `reference` against each named column.
pub fn metric_correlation_table(
    reference_name: &str,
    reference: &[f64],
    columns: &[(String, Vec<f64>)],
    method: CorrelationMethod,
    training_target: Option<&str>,
) -> Result<Vec<MetricCorrelation>> {
    for (_, c) in columns {
        if c.len() != reference.len() {
            return Err(Error::LengthMismatch {
                left: reference.len(),
                right: c.len(),
            });
        }
    }
    par::try_map(columns, |(name, col)| {
        Ok(MetricCorrelation {
            column: name.clone(),
            reference: reference_name.to_string(),
            result: CorrelationResult {
                coefficient: correlate(method, col, reference)?,
                n: reference.len(),
                method,
                orientation_applied: false,
            },
            training_target: training_target == Some(name.as_str()),
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCorrelation {
    pub oracle: String,
    pub result: CorrelationResult,
}

/// Spearman between oriented scores and human error means within each oracle
/// group, groups in name order. Groups with fewer than 3 reports are skipped.
pub fn oracle_group_correlation(
    scores: &[f64],
    orientation: Orientation,
    human: &[f64],
    oracles: &[String],
) -> Result<Vec<OracleCorrelation>> {
    if scores.len() != human.len() || scores.len() != oracles.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: if scores.len() != human.len() { human.len() } else { oracles.len() },
        });
    }
    let oriented = orient_scores(scores, orientation);
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, o) in oracles.iter().enumerate() {
        groups.entry(o.as_str()).or_default().push(i);
    }
    let groups: Vec<(&str, Vec<usize>)> = groups
        .into_iter()
        .filter(|(name, idx)| {
            if idx.len() < 3 {
                warn!("oracle group `{name}` has {} reports; skipped", idx.len());
            }
            idx.len() >= 3
        })
        .collect();
    par::try_map(&groups, |(name, idx)| {
        let s: Vec<f64> = idx.iter().map(|&i| oriented[i]).collect();
        let h: Vec<f64> = idx.iter().map(|&i| human[i]).collect();
        Ok(OracleCorrelation {
            oracle: name.to_string(),
            result: CorrelationResult {
                coefficient: spearman_rho(&s, &h)?,
                n: idx.len(),
                method: CorrelationMethod::Spearman,
                orientation_applied: orientation == Orientation::HigherBetter,
            },
        })
    })
}
