//! Scored report-pair corpora (Best Match, Top 10%), stratified splits and the
//! MeSH overlap audit.

use crate::corpus::{Normalcy, Report};
use crate::error::{Error, Result};
use crate::{par, Orientation, ScoreKind};
use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

/// One ordered (source → paired) example with its similarity score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredReportPair {
    pub source_id: String,
    pub paired_id: String,
    pub score: f64,
    pub score_kind: ScoreKind,
    pub cluster_id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    BestMatch,
    TopDecile,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::BestMatch => "best_match",
            Strategy::TopDecile => "top_decile",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
    Unsplit,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
            Split::Unsplit => "unsplit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCorpus {
    pub pairs: Vec<ScoredReportPair>,
    pub strategy: Strategy,
    pub split: Split,
}

/// Scores every ordered pair (i, j), i ≠ j, inside one cluster.
///
/// `metric(i, j)` receives positions into `ids`: `i` is the source report and
/// `j` the paired one.
pub fn score_cluster_pairs<F>(cluster_id: usize, ids: &[String], kind: ScoreKind, metric: F) -> Vec<ScoredReportPair>
where
    F: Fn(usize, usize) -> f64 + Sync + Send,
{
    if ids.len() < 2 {
        warn!("cluster {cluster_id} has {} report(s); no pairs", ids.len());
        return Vec::new();
    }
    par::map_range(ids.len(), |i| {
        (0..ids.len())
            .filter(|&j| j != i)
            .map(|j| ScoredReportPair {
                source_id: ids[i].clone(),
                paired_id: ids[j].clone(),
                score: metric(i, j),
                score_kind: kind,
                cluster_id,
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// Scores pairs within every cluster, clusters in ascending id order.
/// `metric` receives indices into `reports`.
pub fn score_all_clusters<F>(reports: &[Report], labels: &[usize], kind: ScoreKind, metric: F) -> Result<Vec<ScoredReportPair>>
where
    F: Fn(usize, usize) -> f64 + Sync + Send,
{
    if reports.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: reports.len(),
            right: labels.len(),
        });
    }
    let clusters: BTreeSet<usize> = labels.iter().copied().collect();
    let mut out = Vec::new();
    for c in clusters {
        let members: Vec<usize> = (0..reports.len()).filter(|&i| labels[i] == c).collect();
        let ids: Vec<String> = members.iter().map(|&i| reports[i].id.clone()).collect();
        out.extend(score_cluster_pairs(c, &ids, kind, |i, j| metric(members[i], members[j])));
    }
    Ok(out)
}

fn uniform_kind(pairs: &[ScoredReportPair]) -> Result<Option<ScoreKind>> {
    let kind = pairs.first().map(|p| p.score_kind);
    if let Some(k) = kind {
        if let Some(p) = pairs.iter().find(|p| p.score_kind != k) {
            return Err(Error::InvalidParameter(format!(
                "mixed score kinds {k} and {}",
                p.score_kind
            )));
        }
    }
    Ok(kind)
}

/// Better-first ordering: score by orientation, then smaller paired id, then
/// smaller source id.
fn rank_order(o: Orientation, a: &ScoredReportPair, b: &ScoredReportPair) -> Ordering {
    let by_score = match o {
        Orientation::LowerBetter => a.score.total_cmp(&b.score),
        Orientation::HigherBetter => b.score.total_cmp(&a.score),
    };
    by_score
        .then_with(|| a.paired_id.cmp(&b.paired_id))
        .then_with(|| a.source_id.cmp(&b.source_id))
}

/// Keeps the single best partner of every source report; ties go to the
/// lexicographically smallest paired id. Sources appear in first-seen order.
pub fn build_best_match(pairs: &[ScoredReportPair]) -> Result<PairCorpus> {
    let Some(kind) = uniform_kind(pairs)? else {
        return Ok(PairCorpus {
            pairs: Vec::new(),
            strategy: Strategy::BestMatch,
            split: Split::Unsplit,
        });
    };
    let o = kind.orientation();
    let mut order: Vec<&str> = Vec::new();
    let mut best: HashMap<&str, &ScoredReportPair> = HashMap::new();
    for p in pairs {
        match best.get(p.source_id.as_str()) {
            None => {
                order.push(&p.source_id);
                best.insert(&p.source_id, p);
            }
            Some(cur) if rank_order(o, p, cur) == Ordering::Less => {
                best.insert(&p.source_id, p);
            }
            _ => {}
        }
    }
    Ok(PairCorpus {
        pairs: order.iter().map(|s| best[s].clone()).collect(),
        strategy: Strategy::BestMatch,
        split: Split::Unsplit,
    })
}

/// Grouping within which the top decile is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecileScope {
    #[default]
    PerCluster,
    Global,
    PerSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopDecileOptions {
    pub scope: DecileScope,
    pub fraction: f64,
}

impl Default for TopDecileOptions {
    fn default() -> Self {
        Self {
            scope: DecileScope::PerCluster,
            fraction: 0.1,
        }
    }
}

/// Keeps pairs scoring in the best `fraction` of their group.
///
/// A group of n pairs keeps its `floor(n · fraction)` best, plus every pair
/// tied with the last of those. Groups too small to yield one pair keep only
/// their single best pair. Output preserves input order.
pub fn build_top_decile(pairs: &[ScoredReportPair], opts: TopDecileOptions) -> Result<PairCorpus> {
    if !(opts.fraction > 0.0 && opts.fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!("fraction {} outside (0, 1]", opts.fraction)));
    }
    let kind = uniform_kind(pairs)?;
    let mut keep = vec![false; pairs.len()];
    if let Some(kind) = kind {
        let o = kind.orientation();
        let mut groups: HashMap<String, Vec<usize>> = HashMap::new();
        let mut group_order = Vec::new();
        for (i, p) in pairs.iter().enumerate() {
            let key = match opts.scope {
                DecileScope::PerCluster => p.cluster_id.to_string(),
                DecileScope::Global => String::new(),
                DecileScope::PerSource => p.source_id.clone(),
            };
            groups
                .entry(key.clone())
                .or_insert_with(|| {
                    group_order.push(key);
                    Vec::new()
                })
                .push(i);
        }
        for key in &group_order {
            let mut idx = groups[key].clone();
            idx.sort_by(|&a, &b| rank_order(o, &pairs[a], &pairs[b]));
            let quota = (idx.len() as f64 * opts.fraction + 1e-9).floor() as usize;
            if quota == 0 {
                warn!("group `{key}` has {} pairs; keeping its single best", idx.len());
                keep[idx[0]] = true;
                continue;
            }
            let cutoff = pairs[idx[quota - 1]].score;
            for &i in &idx {
                if o.better(cutoff, pairs[i].score) {
                    break;
                }
                keep[i] = true;
            }
        }
    }
    Ok(PairCorpus {
        pairs: pairs
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(p, _)| p.clone())
            .collect(),
        strategy: Strategy::TopDecile,
        split: Split::Unsplit,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitOptions {
    /// Share held out for testing.
    pub test_fraction: f64,
    /// Share of the remainder held out for validation.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitCorpora {
    pub train: PairCorpus,
    pub validation: PairCorpus,
    pub test: PairCorpus,
}

impl SplitCorpora {
    pub fn iter(&self) -> impl Iterator<Item = &PairCorpus> {
        [&self.train, &self.validation, &self.test].into_iter()
    }
}

/// Largest-remainder apportionment of `total` across strata sized `sizes`.
fn apportion(total: usize, sizes: &[usize]) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return vec![0; sizes.len()];
    }
    let quotas: Vec<f64> = sizes.iter().map(|&s| total as f64 * s as f64 / n as f64).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut rest = total - alloc.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &s in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        if alloc[s] < sizes[s] {
            alloc[s] += 1;
            rest -= 1;
        }
    }
    alloc
}

/// Two-stage stratified split (test off the whole corpus, then validation off
/// the remainder), stratified on the normalcy of each pair's source report.
/// Split outputs keep corpus order.
pub fn split_corpus<F>(corpus: &PairCorpus, normalcy_of: F, opts: SplitOptions) -> Result<SplitCorpora>
where
    F: Fn(&str) -> Option<Normalcy>,
{
    if corpus.pairs.is_empty() {
        return Err(Error::Empty("pair corpus"));
    }
    for f in [opts.test_fraction, opts.validation_fraction] {
        if !(0.0..1.0).contains(&f) {
            return Err(Error::InvalidParameter(format!("split fraction {f} outside [0, 1)")));
        }
    }
    let strata_keys = [Normalcy::Abnormal, Normalcy::Normal];
    let mut strata: Vec<Vec<usize>> = vec![Vec::new(); 2];
    for (i, p) in corpus.pairs.iter().enumerate() {
        let n = normalcy_of(&p.source_id).ok_or_else(|| Error::UnknownReport(p.source_id.clone()))?;
        strata[if n == Normalcy::Abnormal { 0 } else { 1 }].push(i);
    }
    for (key, s) in strata_keys.iter().zip(&strata) {
        if !s.is_empty() && s.len() < 3 {
            return Err(Error::StratumTooSmall {
                stratum: key.as_str().into(),
                size: s.len(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for s in strata.iter_mut() {
        s.shuffle(&mut rng);
    }
    let n = corpus.pairs.len();
    let sizes: Vec<usize> = strata.iter().map(Vec::len).collect();
    let test_alloc = apportion((n as f64 * opts.test_fraction).round() as usize, &sizes);
    let rest_sizes: Vec<usize> = sizes.iter().zip(&test_alloc).map(|(s, t)| s - t).collect();
    let rest_total: usize = rest_sizes.iter().sum();
    let val_alloc = apportion((rest_total as f64 * opts.validation_fraction).round() as usize, &rest_sizes);

    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (s, stratum) in strata.iter().enumerate() {
        let (t, rest) = stratum.split_at(test_alloc[s]);
        let (v, tr) = rest.split_at(val_alloc[s]);
        test.extend_from_slice(t);
        val.extend_from_slice(v);
        train.extend_from_slice(tr);
    }
    let build = |mut idx: Vec<usize>, split| {
        idx.sort_unstable();
        PairCorpus {
            pairs: idx.into_iter().map(|i| corpus.pairs[i].clone()).collect(),
            strategy: corpus.strategy,
            split,
        }
    };
    Ok(SplitCorpora {
        train: build(train, Split::Train),
        validation: build(val, Split::Validation),
        test: build(test, Split::Test),
    })
}

/// Share of pairs whose source report is abnormal.
pub fn abnormal_share<F>(corpus: &PairCorpus, normalcy_of: F) -> f64
where
    F: Fn(&str) -> Option<Normalcy>,
{
    if corpus.pairs.is_empty() {
        return 0.0;
    }
    let abnormal = corpus
        .pairs
        .iter()
        .filter(|p| normalcy_of(&p.source_id) == Some(Normalcy::Abnormal))
        .count();
    abnormal as f64 / corpus.pairs.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapHistogram {
    pub none: usize,
    pub one: usize,
    pub many: usize,
    pub pct_none: f64,
    pub pct_one: f64,
    pub pct_many: f64,
}

/// MeSH tokens compared by the overlap audit: "/"-separated parts of every
/// cleaned label, lowercased.
pub fn mesh_token_set(report: &Report) -> BTreeSet<String> {
    report
        .mesh_labels
        .iter()
        .flat_map(|l| l.split('/'))
        .map(|t| t.trim().to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Buckets pairs by the number of shared MeSH tokens: 0, 1, or more.
pub fn mesh_overlap_stats(pairs: &[ScoredReportPair], reports: &[Report]) -> Result<OverlapHistogram> {
    let index: HashMap<&str, BTreeSet<String>> =
        reports.iter().map(|r| (r.id.as_str(), mesh_token_set(r))).collect();
    let (mut none, mut one, mut many) = (0, 0, 0);
    for p in pairs {
        let a = index
            .get(p.source_id.as_str())
            .ok_or_else(|| Error::UnknownReport(p.source_id.clone()))?;
        let b = index
            .get(p.paired_id.as_str())
            .ok_or_else(|| Error::UnknownReport(p.paired_id.clone()))?;
        match a.intersection(b).count() {
            0 => none += 1,
            1 => one += 1,
            _ => many += 1,
        }
    }
    let total = pairs.len().max(1) as f64;
    Ok(OverlapHistogram {
        none,
        one,
        many,
        pct_none: 100.0 * none as f64 / total,
        pct_one: 100.0 * one as f64 / total,
        pct_many: 100.0 * many as f64 / total,
    })
}

#[derive(Serialize)]
struct CorpusLine<'a> {
    src: &'a str,
    mt: &'a str,
    score: f64,
    src_id: &'a str,
    mt_id: &'a str,
    cluster: usize,
    score_kind: ScoreKind,
}

/// Writes `{src, mt, score}` lines (plus id, cluster and score-kind fields)
/// with source and paired report texts.
pub fn write_corpus_jsonl(path: &Path, corpus: &PairCorpus, reports: &[Report]) -> Result<()> {
    let index: HashMap<&str, &Report> = reports.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut buf = String::new();
    for p in &corpus.pairs {
        let src = index
            .get(p.source_id.as_str())
            .ok_or_else(|| Error::UnknownReport(p.source_id.clone()))?;
        let mt = index
            .get(p.paired_id.as_str())
            .ok_or_else(|| Error::UnknownReport(p.paired_id.clone()))?;
        let line = CorpusLine {
            src: &src.text(),
            mt: &mt.text(),
            score: p.score,
            src_id: &p.source_id,
            mt_id: &p.paired_id,
            cluster: p.cluster_id,
            score_kind: p.score_kind,
        };
        buf.push_str(&serde_json::to_string(&line).expect("corpus line serializes"));
        buf.push('\n');
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[derive(Deserialize)]
struct CorpusLineOwned {
    score: f64,
    src_id: String,
    mt_id: String,
    #[serde(default)]
    cluster: usize,
    score_kind: ScoreKind,
}

/// Reads a corpus written by [`write_corpus_jsonl`] back into pairs.
pub fn read_corpus_jsonl(path: &Path, strategy: Strategy, split: Split) -> Result<PairCorpus> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let l: CorpusLineOwned = serde_json::from_str(line).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        pairs.push(ScoredReportPair {
            source_id: l.src_id,
            paired_id: l.mt_id,
            score: l.score,
            score_kind: l.score_kind,
            cluster_id: l.cluster,
        });
    }
    Ok(PairCorpus { pairs, strategy, split })
}

/// Split manifest: one `source_id<TAB>paired_id` line per pair.
pub fn manifest_lines(corpus: &PairCorpus) -> String {
    let mut s = String::new();
    for p in &corpus.pairs {
        let _ = writeln!(s, "{}\t{}", p.source_id, p.paired_id);
    }
    s
}
