//! MeSH vectorization, K-Means, cluster-count scoring and 2-D projection.

use crate::corpus::Report;
use crate::error::{Error, Result};
use crate::par;
use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::ops::RangeInclusive;

/// Dense row-major term-weight matrix, one row per report.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshVectorMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    vocab: Vec<String>,
}

impl MeshVectorMatrix {
    /// Builds a matrix from explicit rows. Used for synthetic data and tests.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map(Vec::len).ok_or(Error::Empty("matrix rows"))?;
        let mut values = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            values,
            vocab: (0..cols).map(|i| format!("f{i}")).collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn distinct_rows(&self) -> usize {
        let set: HashSet<Vec<u64>> = (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| (v + 0.0).to_bits()).collect())
            .collect();
        set.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct VectorizeOptions {
    pub idf: bool,
    pub l2_normalize: bool,
}

impl Default for VectorizeOptions {
    fn default() -> Self {
        Self {
            idf: true,
            l2_normalize: true,
        }
    }
}

/// Tokens for one MeSH label: the whole label plus each "/"-separated part.
pub fn mesh_tokens(label: &str) -> Vec<String> {
    let whole = label.trim().to_lowercase();
    if whole.is_empty() {
        return Vec::new();
    }
    let mut out = vec![whole.clone()];
    if whole.contains('/') {
        out.extend(
            whole
                .split('/')
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .map(str::to_string),
        );
    }
    out
}

/// Term-count vectors over whole labels and their qualifiers, with optional
/// smoothed IDF scaling and row L2 normalization. Vocabulary is sorted.
pub fn vectorize_mesh(reports: &[Report], opts: VectorizeOptions) -> Result<MeshVectorMatrix> {
    if reports.is_empty() {
        return Err(Error::Empty("report collection"));
    }
    let docs: Vec<BTreeMap<String, f64>> = reports
        .iter()
        .map(|r| {
            let mut tf = BTreeMap::new();
            for tok in r.mesh_labels.iter().flat_map(|l| mesh_tokens(l)) {
                *tf.entry(tok).or_insert(0.0) += 1.0;
            }
            tf
        })
        .collect();
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for d in &docs {
        for t in d.keys() {
            *df.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let vocab: Vec<String> = df.keys().map(|s| s.to_string()).collect();
    let col_of: BTreeMap<&str, usize> = vocab.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let n = reports.len() as f64;
    let idf: Vec<f64> = vocab
        .iter()
        .map(|t| {
            if opts.idf {
                ((1.0 + n) / (1.0 + df[t.as_str()] as f64)).ln() + 1.0
            } else {
                1.0
            }
        })
        .collect();
    let cols = vocab.len();
    let mut values = vec![0.0; reports.len() * cols];
    for (i, d) in docs.iter().enumerate() {
        let row = &mut values[i * cols..(i + 1) * cols];
        for (t, c) in d {
            let j = col_of[t.as_str()];
            row[j] = c * idf[j];
        }
        if opts.l2_normalize {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
    }
    Ok(MeshVectorMatrix {
        rows: reports.len(),
        cols,
        values,
        vocab,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub k: usize,
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub seed: u64,
    pub iterations: usize,
    /// Inertia after each assignment step.
    pub inertia_trace: Vec<f64>,
}

impl ClusterAssignment {
    pub fn inertia(&self) -> f64 {
        *self.inertia_trace.last().unwrap_or(&0.0)
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

pub const DEFAULT_MAX_ITER: usize = 300;

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Farthest-point seeding: a seeded random first centre, then repeatedly the
/// row farthest from all chosen centres (ties to the lowest index).
fn seed_centroids(m: &MeshVectorMatrix, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..m.rows());
    let mut centroids = vec![m.row(first).to_vec()];
    let mut min_d: Vec<f64> = (0..m.rows()).map(|i| sq_dist(m.row(i), m.row(first))).collect();
    while centroids.len() < k {
        let mut best = 0;
        for i in 1..m.rows() {
            if min_d[i] > min_d[best] {
                best = i;
            }
        }
        let c = m.row(best).to_vec();
        for (i, d) in min_d.iter_mut().enumerate() {
            *d = d.min(sq_dist(m.row(i), &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd's K-Means, deterministic for a given seed.
pub fn kmeans(m: &MeshVectorMatrix, k: usize, seed: u64) -> Result<ClusterAssignment> {
    kmeans_with(m, k, seed, DEFAULT_MAX_ITER)
}

pub fn kmeans_with(m: &MeshVectorMatrix, k: usize, seed: u64, max_iter: usize) -> Result<ClusterAssignment> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    let distinct = m.distinct_rows();
    if k > distinct {
        return Err(Error::TooManyClusters { k, distinct });
    }
    let mut centroids = seed_centroids(m, k, seed);
    let mut labels: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let assigned = par::map_range(m.rows(), |i| nearest(m.row(i), &centroids));
        let new_labels: Vec<usize> = assigned.iter().map(|a| a.0).collect();
        let mut dists: Vec<f64> = assigned.iter().map(|a| a.1).collect();
        trace.push(dists.iter().sum());
        let converged = new_labels == labels;
        labels = new_labels;
        iterations += 1;
        if converged || iterations >= max_iter {
            break;
        }
        // update step
        let mut sums = vec![vec![0.0; m.cols()]; k];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(m.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let n = counts[c] as f64;
                centroids[c] = sums[c].iter().map(|s| s / n).collect();
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // reseed to the row farthest from its own centroid
                let far = (0..m.rows())
                    .fold(None::<(usize, f64)>, |best, i| match best {
                        Some((_, d)) if dists[i] <= d => best,
                        _ => Some((i, dists[i])),
                    })
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                centroids[c] = m.row(far).to_vec();
                dists[far] = 0.0;
                labels.clear();
            }
        }
    }
    let mut a = ClusterAssignment {
        k,
        labels,
        centroids,
        seed,
        iterations,
        inertia_trace: trace,
    };
    a.centroids = cluster_means(m, &a.labels, k);
    Ok(a)
}

fn cluster_means(m: &MeshVectorMatrix, labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; m.cols()]; k];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(m.row(i)) {
            *s += v;
        }
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, c)| {
            if c == 0 {
                s
            } else {
                s.into_iter().map(|v| v / c as f64).collect()
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterQuality {
    /// `None` when k < 2 or the within-cluster dispersion is zero.
    pub calinski_harabasz: Option<f64>,
    /// `None` when k < 2.
    pub silhouette: Option<f64>,
    pub inertia: f64,
}

/// Calinski-Harabasz, mean silhouette (singletons count as 0) and inertia.
pub fn cluster_quality(m: &MeshVectorMatrix, labels: &[usize], k: usize) -> Result<ClusterQuality> {
    if labels.len() != m.rows() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: m.rows(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidParameter(format!("label {bad} outside 0..{k}")));
    }
    let n = m.rows();
    let means = cluster_means(m, labels, k);
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    let inertia: f64 = (0..n).map(|i| sq_dist(m.row(i), &means[labels[i]])).sum();
    if k < 2 {
        return Ok(ClusterQuality {
            calinski_harabasz: None,
            silhouette: None,
            inertia,
        });
    }
    let overall: Vec<f64> = (0..m.cols())
        .map(|j| (0..n).map(|i| m.row(i)[j]).sum::<f64>() / n as f64)
        .collect();
    let between: f64 = means
        .iter()
        .zip(&sizes)
        .map(|(mu, &s)| s as f64 * sq_dist(mu, &overall))
        .sum();
    let calinski_harabasz = if n > k && inertia > 0.0 {
        Some((between / (k - 1) as f64) / (inertia / (n - k) as f64))
    } else {
        None
    };
    let per_point = par::map_range(n, |i| {
        let own = labels[i];
        if sizes[own] <= 1 {
            return 0.0;
        }
        let mut sum = vec![0.0; k];
        for j in 0..n {
            if j != i {
                sum[labels[j]] += sq_dist(m.row(i), m.row(j)).sqrt();
            }
        }
        let a = sum[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sum[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 && b.is_finite() {
            (b - a) / denom
        } else {
            0.0
        }
    });
    Ok(ClusterQuality {
        calinski_harabasz,
        silhouette: Some(per_point.iter().sum::<f64>() / n as f64),
        inertia,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KScore {
    pub k: usize,
    pub quality: ClusterQuality,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KSelection {
    pub k: usize,
    pub table: Vec<KScore>,
    pub assignment: ClusterAssignment,
}

/// Picks the k with the largest Calinski-Harabasz score (ties to the smaller k).
pub fn select_k(m: &MeshVectorMatrix, k_range: RangeInclusive<usize>, seed: u64) -> Result<KSelection> {
    if k_range.is_empty() {
        return Err(Error::InvalidParameter("empty k range".into()));
    }
    let distinct = m.distinct_rows();
    let (lo, hi) = (*k_range.start(), *k_range.end());
    if lo < 2 || hi > distinct {
        return Err(Error::InvalidParameter(format!(
            "k range {lo}..={hi} must lie within 2..={distinct}"
        )));
    }
    let ks: Vec<usize> = k_range.collect();
    let runs = par::try_map(&ks, |&k| {
        let a = kmeans(m, k, seed)?;
        let q = cluster_quality(m, &a.labels, k)?;
        Ok::<_, Error>((a, q))
    })?;
    let mut best: Option<usize> = None;
    for (i, (_, q)) in runs.iter().enumerate() {
        if let Some(ch) = q.calinski_harabasz {
            match best.and_then(|b| runs[b].1.calinski_harabasz) {
                Some(b) if ch <= b => {}
                _ => best = Some(i),
            }
        }
    }
    let best = best.unwrap_or(0);
    let table = ks
        .iter()
        .zip(&runs)
        .map(|(&k, (_, q))| KScore { k, quality: *q })
        .collect();
    Ok(KSelection {
        k: ks[best],
        table,
        assignment: runs.into_iter().nth(best).expect("index in range").0,
    })
}

/// Principal-component scores of the mean-centred rows, components ordered by
/// variance. Each component's sign is fixed so its largest-magnitude loading
/// is positive.
pub fn pca_project(m: &MeshVectorMatrix, dims: usize) -> Result<Vec<Vec<f64>>> {
    if m.rows() < dims {
        return Err(Error::TooFewObservations {
            required: dims,
            actual: m.rows(),
        });
    }
    let n = m.rows();
    let x = DMatrix::from_row_slice(n, m.cols(), &m.values);
    let mean = x.row_mean();
    let mut centred = x.clone();
    for mut row in centred.row_iter_mut() {
        row -= &mean;
    }
    if centred.iter().all(|v| v.abs() < 1e-15) {
        warn!("all rows identical; projection is zero");
        return Ok(vec![vec![0.0; dims]; n]);
    }
    let denom = (n.max(2) - 1) as f64;
    let cov = (centred.transpose() * &centred) / denom;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut out = vec![vec![0.0; dims]; n];
    for (d, &c) in order.iter().take(dims).enumerate() {
        let mut v = eig.eigenvectors.column(c).into_owned();
        let pivot = v.iter().fold(0.0f64, |acc, &x| if x.abs() > acc.abs() + 1e-12 { x } else { acc });
        if pivot < 0.0 {
            v = -v;
        }
        let scores = &centred * v;
        for i in 0..n {
            out[i][d] = scores[i];
        }
    }
    Ok(out)
}
