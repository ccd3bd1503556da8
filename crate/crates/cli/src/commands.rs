//! The pipeline stages. Each reads its inputs from the config or from earlier
//! stages' outputs in the run directory and records what it did in the
//! run manifest.

use crate::config::PipelineConfig;
use crate::manifest::{sha256_str, Recorder};
use anyhow::{bail, Context as _};
use log::{info, warn};
use radeval_core::analysis::{
    aggregate_annotations_for, category_totals, dependent_overlapping_test, filter_noisy, load_annotations,
    metric_correlation_table, oracle_group_correlation, orient_scores, percent, spearman_rho, AggregatedReport,
    CorrelationMethod, OverlapTestInput,
};
use radeval_core::clustering::{pca_project, select_k, vectorize_mesh, VectorizeOptions};
use radeval_core::corpus::{
    classify_normalcy, curate as curate_reports, drop_empty_secondary_mesh, load_reports, summarize, write_jsonl,
    read_jsonl, Normalcy, PhraseFilterList, Report, NORMAL_IMPRESSION_PHRASES,
};
use radeval_core::encoder::encoder_by_id;
use radeval_core::estimator::{radeval_score_batch, read_training_jsonl, train as train_estimator, EstimatorCheckpoint};
use radeval_core::pairgen::{
    abnormal_share, build_best_match, build_top_decile, manifest_lines, mesh_overlap_stats, read_corpus_jsonl,
    score_all_clusters, split_corpus, write_corpus_jsonl, Split, SplitOptions, TopDecileOptions,
};
use radeval_core::simscore::{
    bleu, chexbert_similarity, embedding_similarity, extract_radgraph_stub, label_pathologies, radcliq, radgraph_f1,
    BleuOptions, Lexicon, RadGraphAnnotation,
};
use radeval_core::{par, Orientation, ScoreKind};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// A missing or malformed input detected by the CLI itself.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct InputError(pub String);

fn input_error(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

pub struct Context {
    pub cfg: PipelineConfig,
    pub config_hash: String,
}

impl Context {
    pub fn new(cfg: PipelineConfig) -> anyhow::Result<Self> {
        let p = &cfg.paths;
        for path in [Some(&p.reports), Some(&p.lexicon), p.generated.as_ref(), p.annotations.as_ref()]
            .into_iter()
            .flatten()
        {
            if !path.is_file() {
                return Err(input_error(format!("input {} does not exist", path.display())));
            }
        }
        let mut hashed = cfg.clone();
        hashed.run_dir = PathBuf::new();
        let config_hash = sha256_str(&serde_json::to_string(&hashed)?);
        std::fs::create_dir_all(&cfg.run_dir).with_context(|| format!("creating {}", cfg.run_dir.display()))?;
        Ok(Self { cfg, config_hash })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.cfg.run_dir.join(name)
    }

    fn recorder(&self, name: &'static str) -> Recorder {
        Recorder::new(&self.cfg.run_dir, name, &self.config_hash)
    }

    /// Fails with an input error naming the command that produces `name`.
    fn require(&self, name: &str, producer: &str) -> anyhow::Result<PathBuf> {
        let p = self.path(name);
        if !p.exists() {
            return Err(input_error(format!("{} not found; run `radeval {producer}` first", p.display())));
        }
        Ok(p)
    }
}

fn write_file(rec: &mut Recorder, path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    rec.output(path)
}

fn write_json<T: Serialize>(rec: &mut Recorder, path: &Path, value: &T) -> anyhow::Result<()> {
    write_file(rec, path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn write_csv(rec: &mut Recorder, path: &Path, header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    write_file(rec, path, std::str::from_utf8(&bytes)?)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn load_curated(ctx: &Context) -> anyhow::Result<Vec<Report>> {
    let p = ctx.require("curated.jsonl", "curate")?;
    Ok(read_jsonl(&p)?)
}

#[derive(Serialize)]
struct CurateSummary {
    total: usize,
    normal: usize,
    abnormal: usize,
    abnormal_share: f64,
    /// Abnormal count when only the mesh-0 rule is applied.
    abnormal_by_mesh0_only: usize,
}

pub fn curate(ctx: &Context) -> anyhow::Result<()> {
    let cfg = &ctx.cfg;
    let mut rec = ctx.recorder("curate");
    rec.input(&cfg.paths.reports)?;
    let mut reports = load_reports(&cfg.paths.reports, cfg.reports_format(), &cfg.paths.load)?;
    let filters = PhraseFilterList::new(
        NORMAL_IMPRESSION_PHRASES
            .iter()
            .map(|s| s.to_string())
            .chain(cfg.curate.extra_phrases.iter().cloned()),
    );
    curate_reports(&mut reports, &filters);
    let mesh_only = PhraseFilterList::new(Vec::<String>::new());
    let abnormal_by_mesh0_only = reports
        .iter()
        .filter(|r| classify_normalcy(r, &mesh_only) == Normalcy::Abnormal)
        .count();
    if cfg.curate.require_secondary_mesh {
        let before = reports.len();
        reports = drop_empty_secondary_mesh(reports);
        info!("dropped {} reports without a second MeSH label", before - reports.len());
    }
    let out = ctx.path("curated.jsonl");
    write_jsonl(&out, &reports)?;
    rec.output(&out)?;
    let s = summarize(&reports);
    let summary = CurateSummary {
        total: s.total,
        normal: s.normal,
        abnormal: s.abnormal,
        abnormal_share: s.abnormal_share,
        abnormal_by_mesh0_only,
    };
    write_json(&mut rec, &ctx.path("curate_summary.json"), &summary)?;
    println!(
        "curated {} reports: {} normal, {} abnormal ({:.2}% abnormal; {} abnormal by mesh-0 alone)",
        s.total,
        s.normal,
        s.abnormal,
        100.0 * s.abnormal_share,
        abnormal_by_mesh0_only
    );
    rec.finish()
}

pub fn cluster(ctx: &Context) -> anyhow::Result<()> {
    let cfg = &ctx.cfg;
    let mut rec = ctx.recorder("cluster");
    let reports = load_curated(ctx)?;
    rec.input(&ctx.path("curated.jsonl"))?;
    let seed = ctx.cfg.clustering_seed();
    rec.seed("clustering", seed);
    let m = vectorize_mesh(
        &reports,
        VectorizeOptions {
            idf: cfg.clustering.idf,
            l2_normalize: cfg.clustering.l2_normalize,
        },
    )?;
    let sel = select_k(&m, cfg.clustering.k_min..=cfg.clustering.k_max, seed)?;
    let rows: Vec<Vec<String>> = reports
        .iter()
        .zip(&sel.assignment.labels)
        .map(|(r, l)| vec![r.id.clone(), l.to_string()])
        .collect();
    write_csv(&mut rec, &ctx.path("clusters.csv"), &["id", "cluster"], &rows)?;
    let table: Vec<Vec<String>> = sel
        .table
        .iter()
        .map(|s| {
            vec![
                s.k.to_string(),
                opt(s.quality.calinski_harabasz),
                opt(s.quality.silhouette),
                s.quality.inertia.to_string(),
            ]
        })
        .collect();
    write_csv(
        &mut rec,
        &ctx.path("cluster_scores.csv"),
        &["k", "calinski_harabasz", "silhouette", "inertia"],
        &table,
    )?;
    let proj = pca_project(&m, 2)?;
    let rows: Vec<Vec<String>> = reports
        .iter()
        .zip(&sel.assignment.labels)
        .zip(&proj)
        .map(|((r, l), p)| vec![r.id.clone(), l.to_string(), p[0].to_string(), p[1].to_string()])
        .collect();
    write_csv(&mut rec, &ctx.path("projection.csv"), &["id", "cluster", "pc1", "pc2"], &rows)?;
    let summary = serde_json::json!({
        "chosen_k": sel.k,
        "cluster_sizes": sel.assignment.cluster_sizes(),
        "seed": seed,
    });
    write_json(&mut rec, &ctx.path("cluster_summary.json"), &summary)?;
    println!("chose k = {} (sizes {:?})", sel.k, sel.assignment.cluster_sizes());
    rec.finish()
}

fn read_clusters(path: &Path, reports: &[Report]) -> anyhow::Result<Vec<usize>> {
    #[derive(Deserialize)]
    struct Row {
        id: String,
        cluster: usize,
    }
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut by_id = HashMap::new();
    for row in rdr.deserialize() {
        let row: Row = row.with_context(|| format!("parsing {}", path.display()))?;
        by_id.insert(row.id, row.cluster);
    }
    reports
        .iter()
        .map(|r| {
            by_id
                .get(&r.id)
                .copied()
                .ok_or_else(|| input_error(format!("report {} missing from {}", r.id, path.display())))
        })
        .collect()
}

fn annotate_all(texts: &[String], lexicon: &Lexicon) -> anyhow::Result<Vec<RadGraphAnnotation>> {
    Ok(par::try_map(texts, |t| extract_radgraph_stub(t, lexicon))?)
}

pub fn pairs(ctx: &Context) -> anyhow::Result<()> {
    let cfg = &ctx.cfg;
    let mut rec = ctx.recorder("pairs");
    let reports = load_curated(ctx)?;
    let clusters_path = ctx.require("clusters.csv", "cluster")?;
    let labels = read_clusters(&clusters_path, &reports)?;
    rec.input(&ctx.path("curated.jsonl"))?;
    rec.input(&clusters_path)?;
    rec.input(&cfg.paths.lexicon)?;
    let lexicon = Lexicon::load_tsv(&cfg.paths.lexicon)?;
    let texts: Vec<String> = reports.iter().map(Report::text).collect();
    let graphs = annotate_all(&texts, &lexicon)?;
    let kind = cfg.pairs.metric;
    let coeffs = cfg.pairs.radcliq;
    // Source i is the reference, paired report j the candidate.
    let all = score_all_clusters(&reports, &labels, kind, |i, j| {
        let rg = radgraph_f1(&graphs[j], &graphs[i]);
        match kind {
            ScoreKind::RadgraphF1 => rg,
            ScoreKind::Radcliq => radcliq(bleu(&texts[j], &texts[i], 2, BleuOptions::default()), rg, &coeffs),
        }
    })?;
    let best = build_best_match(&all)?;
    let top = build_top_decile(
        &all,
        TopDecileOptions {
            scope: cfg.pairs.decile_scope,
            fraction: cfg.pairs.top_fraction,
        },
    )?;
    for corpus in [&best, &top] {
        let p = ctx.path(&format!("pairs_{}.jsonl", corpus.strategy.as_str()));
        write_corpus_jsonl(&p, corpus, &reports)?;
        rec.output(&p)?;
    }
    let mut rows = Vec::new();
    for (name, pairs) in [("all_scored", &all), ("best_match", &best.pairs), ("top_decile", &top.pairs)] {
        let h = mesh_overlap_stats(pairs, &reports)?;
        rows.push(vec![
            name.to_string(),
            pairs.len().to_string(),
            h.none.to_string(),
            h.one.to_string(),
            h.many.to_string(),
            format!("{:.2}", h.pct_none),
            format!("{:.2}", h.pct_one),
            format!("{:.2}", h.pct_many),
        ]);
    }
    write_csv(
        &mut rec,
        &ctx.path("mesh_overlap.csv"),
        &["corpus", "pairs", "none", "one", "many", "pct_none", "pct_one", "pct_many"],
        &rows,
    )?;
    println!(
        "scored {} pairs ({}); best match {}, top decile {}",
        all.len(),
        kind,
        best.pairs.len(),
        top.pairs.len()
    );
    rec.finish()
}

pub fn split(ctx: &Context) -> anyhow::Result<()> {
    let cfg = &ctx.cfg;
    let mut rec = ctx.recorder("split");
    let reports = load_curated(ctx)?;
    let strategy = cfg.split.corpus;
    let name = format!("pairs_{}.jsonl", strategy.as_str());
    let corpus_path = ctx.require(&name, "pairs")?;
    rec.input(&corpus_path)?;
    let corpus = read_corpus_jsonl(&corpus_path, strategy, Split::Unsplit)?;
    let normalcy: HashMap<&str, Normalcy> = reports
        .iter()
        .filter_map(|r| r.normalcy.map(|n| (r.id.as_str(), n)))
        .collect();
    let normalcy_of = |id: &str| normalcy.get(id).copied();
    let seed = cfg.split_seed();
    rec.seed("split", seed);
    let parts = split_corpus(
        &corpus,
        normalcy_of,
        SplitOptions {
            test_fraction: cfg.split.test_fraction,
            validation_fraction: cfg.split.validation_fraction,
            seed,
        },
    )?;
    let overall = abnormal_share(&corpus, normalcy_of);
    let mut rows = Vec::new();
    for part in parts.iter() {
        let split = part.split.as_str();
        let p = ctx.path(&format!("{split}.jsonl"));
        write_corpus_jsonl(&p, part, &reports)?;
        rec.output(&p)?;
        write_file(&mut rec, &ctx.path(&format!("{split}_pairs.tsv")), &manifest_lines(part))?;
        let share = abnormal_share(part, normalcy_of);
        if (share - overall).abs() * 100.0 > cfg.split.tolerance_pp {
            warn!(
                "{split}: {:.2}% abnormal vs {:.2}% overall exceeds the {} pp tolerance",
                100.0 * share,
                100.0 * overall,
                cfg.split.tolerance_pp
            );
        }
        rows.push(vec![split.to_string(), part.pairs.len().to_string(), format!("{:.2}", 100.0 * share)]);
    }
    rows.push(vec!["total".into(), corpus.pairs.len().to_string(), format!("{:.2}", 100.0 * overall)]);
    write_csv(&mut rec, &ctx.path("split_summary.csv"), &["dataset", "# reports total", "% abnormal"], &rows)?;
    for r in &rows {
        println!("{:<10} {:>7} pairs {:>6}% abnormal", r[0], r[1], r[2]);
    }
    rec.finish()
}

pub fn train(ctx: &Context) -> anyhow::Result<()> {
    let cfg = &ctx.cfg;
    let mut rec = ctx.recorder("train");
    let train_path = ctx.require("train.jsonl", "split")?;
    let val_path = ctx.require("validation.jsonl", "split")?;
    rec.input(&train_path)?;
    rec.input(&val_path)?;
    let train_set = read_training_jsonl(&train_path)?;
    let val_set = read_training_jsonl(&val_path)?;
    let encoder = encoder_by_id(&cfg.training.encoder)?;
    let tc = cfg.training_config();
    rec.seed("training", tc.seed);
    let (outcome, checkpoint) = train_estimator(&train_set, &val_set, encoder.as_ref(), cfg.pairs.metric, &tc)?;
    let dir = ctx.path("checkpoint");
    if dir.exists() {
        std::fs::remove_dir_all(&dir).with_context(|| format!("clearing {}", dir.display()))?;
    }
    checkpoint.save(&dir, Some(&outcome))?;
    rec.output(&dir.join("manifest.json"))?;
    rec.output(&dir.join("weights.bin"))?;
    let rows: Vec<Vec<String>> = outcome
        .history
        .iter()
        .map(|r| {
            vec![
                r.epoch.to_string(),
                r.train_loss.to_string(),
                r.validation_loss.to_string(),
                opt(r.validation_tau),
            ]
        })
        .collect();
    write_csv(
        &mut rec,
        &ctx.path("training_history.csv"),
        &["epoch", "train_loss", "validation_loss", "validation_tau"],
        &rows,
    )?;
    let selected = &outcome.history[outcome.selected_epoch - 1];
    println!(
        "trained {} epochs on {} pairs; selected epoch {} (validation tau {})",
        outcome.history.len(),
        train_set.len(),
        outcome.selected_epoch,
        opt(selected.validation_tau)
    );
    rec.finish()
}

#[derive(Debug, Deserialize)]
struct GeneratedRow {
    id: String,
    ground_truth: String,
    generated: String,
    #[serde(default)]
    oracle: String,
}

fn read_generated(ctx: &Context) -> anyhow::Result<(PathBuf, Vec<GeneratedRow>)> {
    let path = ctx
        .cfg
        .paths
        .generated
        .clone()
        .ok_or_else(|| input_error("paths.generated is not set"))?;
    let mut rdr = csv::Reader::from_path(&path).with_context(|| format!("reading {}", path.display()))?;
    let rows = rdr
        .deserialize()
        .collect::<Result<Vec<GeneratedRow>, _>>()
        .with_context(|| format!("parsing {}", path.display()))?;
    if rows.is_empty() {
        return Err(input_error(format!("{} has no rows", path.display())));
    }
    Ok((path, rows))
}

pub fn score(ctx: &Context) -> anyhow::Result<()> {
    let mut rec = ctx.recorder("score");
    let dir = ctx.path("checkpoint");
    let checkpoint = EstimatorCheckpoint::load(&dir)?;
    rec.input(&dir.join("weights.bin"))?;
    let encoder = encoder_by_id(&checkpoint.encoder_id)?;
    let (path, rows) = read_generated(ctx)?;
    rec.input(&path)?;
    let pairs: Vec<(String, String)> = rows.iter().map(|r| (r.ground_truth.clone(), r.generated.clone())).collect();
    let scores = radeval_score_batch(&checkpoint, encoder.as_ref(), &pairs)?;
    let out: Vec<Vec<String>> = rows
        .iter()
        .zip(&scores)
        .map(|(r, s)| vec![r.id.clone(), s.score.to_string(), s.orientation.as_str().to_string()])
        .collect();
    write_csv(&mut rec, &ctx.path("scores.csv"), &["id", "radeval", "orientation"], &out)?;
    println!("scored {} generated reports ({})", out.len(), checkpoint.orientation);
    rec.finish()
}

/// Per-report automatic metric scores, candidate = generated report.
struct MetricColumns {
    names: Vec<&'static str>,
    orientations: Vec<Orientation>,
    values: Vec<Vec<f64>>,
}

impl MetricColumns {
    fn get(&self, name: &str) -> &[f64] {
        let i = self.names.iter().position(|n| *n == name).expect("known metric");
        &self.values[i]
    }

    fn orientation(&self, name: &str) -> Orientation {
        let i = self.names.iter().position(|n| *n == name).expect("known metric");
        self.orientations[i]
    }
}

fn read_scores(path: &Path, rows: &[GeneratedRow]) -> anyhow::Result<(Vec<f64>, Orientation)> {
    #[derive(Deserialize)]
    struct Row {
        id: String,
        radeval: f64,
        orientation: String,
    }
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut by_id = HashMap::new();
    let mut orientation = None;
    for row in rdr.deserialize() {
        let row: Row = row.with_context(|| format!("parsing {}", path.display()))?;
        orientation = Some(row.orientation.parse::<Orientation>()?);
        by_id.insert(row.id, row.radeval);
    }
    let orientation = orientation.ok_or_else(|| input_error(format!("{} has no rows", path.display())))?;
    let values = rows
        .iter()
        .map(|r| {
            by_id
                .get(&r.id)
                .copied()
                .ok_or_else(|| input_error(format!("no RadEval score for {}", r.id)))
        })
        .collect::<anyhow::Result<Vec<f64>>>()?;
    Ok((values, orientation))
}

fn compute_metrics(ctx: &Context, rows: &[GeneratedRow], radeval: (Vec<f64>, Orientation)) -> anyhow::Result<MetricColumns> {
    let cfg = &ctx.cfg;
    let lexicon = Lexicon::load_tsv(&cfg.paths.lexicon)?;
    let encoder = encoder_by_id(&cfg.training.encoder)?;
    let coeffs = cfg.pairs.radcliq;
    let per_row = par::try_map(rows, |r| -> anyhow::Result<[f64; 6]> {
        let (cand, refr) = (&r.generated, &r.ground_truth);
        let b4 = bleu(cand, refr, 4, BleuOptions::default());
        let b2 = bleu(cand, refr, 2, BleuOptions::default());
        let bert = embedding_similarity(cand, refr, encoder.as_ref())?.f1;
        let chex = chexbert_similarity(label_pathologies(cand).values(), label_pathologies(refr).values())?;
        let rg = radgraph_f1(&extract_radgraph_stub(cand, &lexicon)?, &extract_radgraph_stub(refr, &lexicon)?);
        Ok([b4, b2, bert, chex, rg, radcliq(b2, rg, &coeffs)])
    })?;
    let mut values: Vec<Vec<f64>> = (0..6).map(|k| per_row.iter().map(|v| v[k]).collect()).collect();
    values.push(radeval.0);
    let hb = Orientation::HigherBetter;
    Ok(MetricColumns {
        names: vec!["bleu", "bleu2", "bertscore", "chexbert", "radgraph_f1", "radcliq", "radeval"],
        orientations: vec![hb, hb, hb, hb, hb, Orientation::LowerBetter, radeval.1],
        values,
    })
}

fn subset(values: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| values[i]).collect()
}

pub fn correlate(ctx: &Context) -> anyhow::Result<()> {
    let cfg = &ctx.cfg;
    let mut rec = ctx.recorder("correlate");
    let (gen_path, rows) = read_generated(ctx)?;
    let scores_path = ctx.require("scores.csv", "score")?;
    rec.input(&gen_path)?;
    rec.input(&scores_path)?;
    rec.input(&cfg.paths.lexicon)?;
    let radeval = read_scores(&scores_path, &rows)?;
    let m = compute_metrics(ctx, &rows, radeval)?;

    let mut header = vec!["id", "oracle"];
    header.extend(&m.names);
    let table: Vec<Vec<String>> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut v = vec![r.id.clone(), r.oracle.clone()];
            v.extend(m.values.iter().map(|c| c[i].to_string()));
            v
        })
        .collect();
    write_csv(&mut rec, &ctx.path("metric_scores.csv"), &header, &table)?;

    // RadEval against every metric, itself included.
    let columns: Vec<(String, Vec<f64>)> = m
        .names
        .iter()
        .zip(&m.values)
        .map(|(n, v)| (n.to_string(), v.clone()))
        .collect();
    let target = cfg.pairs.metric.as_str();
    let corr = metric_correlation_table("radeval", m.get("radeval"), &columns, CorrelationMethod::Spearman, Some(target))?;
    let rows_out: Vec<Vec<String>> = corr
        .iter()
        .map(|c| {
            vec![
                c.column.clone(),
                opt(c.result.coefficient),
                percent(c.result.coefficient),
                c.result.n.to_string(),
                c.training_target.to_string(),
            ]
        })
        .collect();
    write_csv(
        &mut rec,
        &ctx.path("metric_correlations.csv"),
        &["metric", "spearman", "percent", "n", "training_target"],
        &rows_out,
    )?;

    let Some(ann_path) = cfg.paths.annotations.clone() else {
        warn!("paths.annotations is not set; skipping human correlations");
        return rec.finish();
    };
    rec.input(&ann_path)?;
    let records = load_annotations(&ann_path)?;
    let totals = category_totals(&records);
    let mut cat_rows: Vec<Vec<String>> = totals
        .iter()
        .map(|(c, (s, i))| {
            vec![
                c.number().to_string(),
                c.as_str().to_string(),
                s.to_string(),
                i.to_string(),
                c.is_extension().to_string(),
            ]
        })
        .collect();
    let (ts, ti) = totals.values().fold((0, 0), |a, (s, i)| (a.0 + s, a.1 + i));
    cat_rows.push(vec!["".into(), "total".into(), ts.to_string(), ti.to_string(), "".into()]);
    write_csv(
        &mut rec,
        &ctx.path("category_totals.csv"),
        &["category", "name", "significant", "insignificant", "extension"],
        &cat_rows,
    )?;

    let ids: Vec<String> = rows.iter().map(|r| r.id.clone()).collect();
    let agg = aggregate_annotations_for(&ids, &records);
    let agg_rows: Vec<Vec<String>> = agg
        .iter()
        .map(|a| {
            vec![
                a.report_id.clone(),
                a.annotators.to_string(),
                a.mean_significant.to_string(),
                a.mean_insignificant.to_string(),
                a.mean_total.to_string(),
            ]
        })
        .collect();
    write_csv(
        &mut rec,
        &ctx.path("annotation_aggregate.csv"),
        &["report_id", "annotators", "mean_significant", "mean_insignificant", "mean_total"],
        &agg_rows,
    )?;
    if agg.len() < 3 {
        warn!("only {} generated reports have annotations; skipping human correlations", agg.len());
        return rec.finish();
    }
    let pos: HashMap<&str, usize> = rows.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
    let noisy: Vec<AggregatedReport> = filter_noisy(&agg, cfg.analysis.noisy_threshold);
    let mut human_rows = Vec::new();
    for (subset_name, group) in [("complete", &agg), ("noisy", &noisy)] {
        if group.len() < 3 {
            warn!("{subset_name} subset has {} reports; skipped", group.len());
            continue;
        }
        let idx: Vec<usize> = group.iter().map(|a| pos[a.report_id.as_str()]).collect();
        let total: Vec<f64> = group.iter().map(|a| a.mean_total).collect();
        let sig: Vec<f64> = group.iter().map(|a| a.mean_significant).collect();
        for name in &m.names {
            let o = m.orientation(name);
            let s = orient_scores(&subset(m.get(name), &idx), o);
            let rt = spearman_rho(&s, &total)?;
            let rs = spearman_rho(&s, &sig)?;
            human_rows.push(vec![
                subset_name.to_string(),
                name.to_string(),
                group.len().to_string(),
                percent(rt),
                percent(rs),
                (o == Orientation::HigherBetter).to_string(),
            ]);
        }
    }
    write_csv(
        &mut rec,
        &ctx.path("human_correlations.csv"),
        &["subset", "metric", "n", "total_errors_pct", "significant_errors_pct", "negated"],
        &human_rows,
    )?;

    let idx: Vec<usize> = agg.iter().map(|a| pos[a.report_id.as_str()]).collect();
    let oracles: Vec<String> = idx.iter().map(|&i| rows[i].oracle.clone()).collect();
    let total: Vec<f64> = agg.iter().map(|a| a.mean_total).collect();
    let sig: Vec<f64> = agg.iter().map(|a| a.mean_significant).collect();
    let mut oracle_rows = Vec::new();
    for name in &m.names {
        let s = subset(m.get(name), &idx);
        let o = m.orientation(name);
        let by_total = oracle_group_correlation(&s, o, &total, &oracles)?;
        let by_sig = oracle_group_correlation(&s, o, &sig, &oracles)?;
        for (t, g) in by_total.iter().zip(&by_sig) {
            oracle_rows.push(vec![
                t.oracle.clone(),
                name.to_string(),
                t.result.n.to_string(),
                percent(t.result.coefficient),
                percent(g.result.coefficient),
            ]);
        }
    }
    write_csv(
        &mut rec,
        &ctx.path("oracle_correlations.csv"),
        &["oracle", "metric", "n", "total_errors_pct", "significant_errors_pct"],
        &oracle_rows,
    )?;
    println!(
        "correlated {} metrics over {} reports ({} annotated, {} noisy)",
        m.names.len(),
        rows.len(),
        agg.len(),
        noisy.len()
    );
    rec.finish()
}

#[derive(Serialize)]
struct SigtestEntry {
    label: String,
    n: usize,
    r_jk: Option<f64>,
    r_jh: Option<f64>,
    r_kh: Option<f64>,
    variant: String,
    statistic: Option<f64>,
    p: Option<f64>,
    alpha: f64,
    reject: Option<bool>,
    error: Option<String>,
}

fn run_test(ctx: &Context, label: &str, n: usize, r: [Option<f64>; 3]) -> SigtestEntry {
    let a = &ctx.cfg.analysis;
    let mut e = SigtestEntry {
        label: label.to_string(),
        n,
        r_jk: r[0],
        r_jh: r[1],
        r_kh: r[2],
        variant: a.variant.as_str().to_string(),
        statistic: None,
        p: None,
        alpha: a.alpha,
        reject: None,
        error: None,
    };
    let [Some(r_jk), Some(r_jh), Some(r_kh)] = r else {
        e.error = Some("undefined correlation".into());
        return e;
    };
    let input = OverlapTestInput {
        r_jk,
        r_jh,
        r_kh,
        n,
        alpha: a.alpha,
        alternative: a.alternative,
    };
    match dependent_overlapping_test(&input, a.variant) {
        Ok(res) => {
            let rep = res.report(a.alpha);
            e.statistic = Some(rep.statistic);
            e.p = Some(rep.p);
            e.reject = Some(rep.reject);
        }
        Err(err) => e.error = Some(err.to_string()),
    }
    e
}

pub fn sigtest(ctx: &Context) -> anyhow::Result<()> {
    let cfg = &ctx.cfg;
    let mut rec = ctx.recorder("sigtest");
    let scores_path = ctx.require("metric_scores.csv", "correlate")?;
    rec.input(&scores_path)?;
    let mut entries = Vec::new();
    let agg_path = ctx.path("annotation_aggregate.csv");
    if agg_path.exists() {
        rec.input(&agg_path)?;
        #[derive(Deserialize)]
        struct ScoreRow {
            id: String,
            oracle: String,
            radcliq: f64,
            radeval: f64,
        }
        #[derive(Deserialize)]
        struct AggRow {
            report_id: String,
            mean_total: f64,
        }
        let mut rdr = csv::Reader::from_path(&scores_path)?;
        let scores: HashMap<String, ScoreRow> = rdr
            .deserialize::<ScoreRow>()
            .map(|r| r.map(|r| (r.id.clone(), r)))
            .collect::<Result<_, _>>()
            .with_context(|| format!("parsing {}", scores_path.display()))?;
        let mut rdr = csv::Reader::from_path(&agg_path)?;
        let agg: Vec<AggRow> = rdr
            .deserialize()
            .collect::<Result<_, _>>()
            .with_context(|| format!("parsing {}", agg_path.display()))?;
        let checkpoint = EstimatorCheckpoint::load(&ctx.path("checkpoint"))?;
        let mut groups: Vec<(String, Vec<&AggRow>)> = vec![("all".into(), agg.iter().collect())];
        let mut oracles: Vec<String> = agg
            .iter()
            .filter_map(|a| scores.get(&a.report_id).map(|s| s.oracle.clone()))
            .filter(|o| !o.is_empty())
            .collect();
        oracles.sort();
        oracles.dedup();
        for o in oracles {
            let members = agg
                .iter()
                .filter(|a| scores.get(&a.report_id).is_some_and(|s| s.oracle == o))
                .collect();
            groups.push((o, members));
        }
        for (label, members) in groups {
            let members: Vec<(&AggRow, &ScoreRow)> = members
                .into_iter()
                .filter_map(|a| scores.get(&a.report_id).map(|s| (a, s)))
                .collect();
            if members.len() < 4 {
                warn!("group {label} has {} reports; skipped", members.len());
                continue;
            }
            let human: Vec<f64> = members.iter().map(|(a, _)| a.mean_total).collect();
            let k: Vec<f64> = members.iter().map(|(_, s)| s.radcliq).collect();
            let h: Vec<f64> = members.iter().map(|(_, s)| s.radeval).collect();
            let k = orient_scores(&k, Orientation::LowerBetter);
            let h = orient_scores(&h, checkpoint.orientation);
            let r = [spearman_rho(&human, &k)?, spearman_rho(&human, &h)?, spearman_rho(&k, &h)?];
            entries.push(run_test(ctx, &label, members.len(), r));
        }
    } else {
        warn!("{} not found; only configured comparisons are tested", agg_path.display());
    }
    for c in &cfg.analysis.comparisons {
        entries.push(run_test(ctx, &c.label, c.n, [Some(c.r_jk), Some(c.r_jh), Some(c.r_kh)]));
    }
    if entries.is_empty() {
        bail!("nothing to test: no annotations and no configured comparisons");
    }
    let report = serde_json::json!({
        "variant": cfg.analysis.variant.as_str(),
        "alternative": cfg.analysis.alternative,
        "alpha": cfg.analysis.alpha,
        "tests": entries,
    });
    write_json(&mut rec, &ctx.path("significance.json"), &report)?;
    let mut summary = String::new();
    for e in &entries {
        let _ = writeln!(
            summary,
            "{:<12} n={:<4} p={} reject={}",
            e.label,
            e.n,
            opt(e.p),
            e.reject.map_or("NA".into(), |r| r.to_string())
        );
    }
    print!("{summary}");
    rec.finish()
}

pub fn all(ctx: &Context) -> anyhow::Result<()> {
    curate(ctx)?;
    cluster(ctx)?;
    pairs(ctx)?;
    split(ctx)?;
    train(ctx)?;
    score(ctx)?;
    correlate(ctx)?;
    sigtest(ctx)
}
