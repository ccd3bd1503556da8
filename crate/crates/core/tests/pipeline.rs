//! Stage-to-stage behaviour on small hand-built inputs.

use radeval_core::corpus::{curate, load_reports, read_jsonl, write_jsonl, InputFormat, LoadOptions, PhraseFilterList};
use radeval_core::encoder::ToyEncoder;
use radeval_core::estimator::{radeval_score, radeval_score_batch, train, EstimatorCheckpoint, TrainingConfig, TrainingExample};
use radeval_core::pairgen::{
    build_best_match, build_top_decile, read_corpus_jsonl, score_all_clusters, write_corpus_jsonl, Split, Strategy,
    TopDecileOptions,
};
use radeval_core::simscore::{bleu, BleuOptions};
use radeval_core::{Orientation, ScoreKind};

const REPORTS: &str = "id,findings,impression,mesh
a,the heart is enlarged.,mild cardiomegaly.,\"cardiomegaly/mild, no indexing\"
b,the heart is moderately enlarged.,moderate cardiomegaly.,cardiomegaly/moderate
c,the lungs are clear.,No acute disease.,normal
";

#[test]
fn csv_to_pairs_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("reports.csv");
    std::fs::write(&csv, REPORTS).unwrap();
    let mut reports = load_reports(&csv, InputFormat::Csv, &LoadOptions::default()).unwrap();
    curate(&mut reports, &PhraseFilterList::default());
    assert_eq!(reports[0].mesh_labels, ["cardiomegaly/mild"]);

    let jsonl = dir.path().join("curated.jsonl");
    write_jsonl(&jsonl, &reports).unwrap();
    assert_eq!(read_jsonl(&jsonl).unwrap(), reports);

    let texts: Vec<String> = reports.iter().map(|r| r.text()).collect();
    let pairs = score_all_clusters(&reports, &[0, 0, 0], ScoreKind::RadgraphF1, |i, j| {
        bleu(&texts[j], &texts[i], 2, BleuOptions::default())
    })
    .unwrap();
    assert_eq!(pairs.len(), 6);
    let best = build_best_match(&pairs).unwrap();
    assert_eq!(best.pairs.len(), 3);
    assert_eq!(best.pairs[0].paired_id, "b");

    let out = dir.path().join("best.jsonl");
    write_corpus_jsonl(&out, &best, &reports).unwrap();
    let back = read_corpus_jsonl(&out, Strategy::BestMatch, Split::Unsplit).unwrap();
    assert_eq!(back.pairs, best.pairs);
}

#[test]
fn top_decile_of_twenty_keeps_two() {
    let reports: Vec<_> = (0..5)
        .map(|i| radeval_core::corpus::Report {
            id: format!("r{i}"),
            findings: String::new(),
            impression: String::new(),
            mesh_labels: vec!["x".into()],
            normalcy: None,
        })
        .collect();
    let pairs = score_all_clusters(&reports, &[0; 5], ScoreKind::Radcliq, |i, j| (i * 5 + j) as f64).unwrap();
    assert_eq!(pairs.len(), 20);
    let top = build_top_decile(&pairs, TopDecileOptions::default()).unwrap();
    let kept: Vec<f64> = top.pairs.iter().map(|p| p.score).collect();
    assert_eq!(kept, [1.0, 2.0]);
}

fn examples(n: usize, offset: usize) -> Vec<TrainingExample> {
    let words = ["effusion", "clear", "opacity", "normal", "heart", "enlarged", "base", "left"];
    (0..n)
        .map(|k| {
            let i = k + offset;
            TrainingExample {
                src: format!("{} {} {}", words[i % 8], words[(i / 2) % 8], words[(i / 3) % 8]),
                mt: format!("{} {}", words[(i * 5) % 8], words[(i + 3) % 8]),
                score: ((i * 7) % 11) as f64 / 11.0,
            }
        })
        .collect()
}

#[test]
fn checkpoint_round_trip_and_batch_order() {
    let encoder = ToyEncoder::default();
    let config = TrainingConfig {
        max_epochs: 4,
        ..TrainingConfig::default()
    };
    let (outcome, ck) = train(&examples(60, 0), &examples(20, 100), &encoder, ScoreKind::Radcliq, &config).unwrap();
    assert_eq!(ck.orientation, Orientation::LowerBetter);
    assert_eq!(ck.validation_tau_history.len(), 4);

    let dir = tempfile::tempdir().unwrap();
    ck.save(dir.path(), Some(&outcome)).unwrap();
    assert!(dir.path().join("epochs/epoch_004.bin").exists());
    let loaded = EstimatorCheckpoint::load(dir.path()).unwrap();
    assert_eq!(loaded.regressor.params(), ck.regressor.params());

    let batch: Vec<(String, String)> = examples(15, 200).into_iter().map(|e| (e.src, e.mt)).collect();
    let forward = radeval_score_batch(&loaded, &encoder, &batch).unwrap();
    let mut reversed = batch.clone();
    reversed.reverse();
    let mut backward = radeval_score_batch(&loaded, &encoder, &reversed).unwrap();
    backward.reverse();
    assert_eq!(forward, backward);
    let single = radeval_score(&loaded, &encoder, &batch[3].0, &batch[3].1).unwrap();
    assert_eq!(single, forward[3]);

    let other = ToyEncoder::new(16);
    assert!(radeval_score(&loaded, &other, "a", "b").is_err());
}

#[test]
fn tampered_weights_are_rejected() {
    let encoder = ToyEncoder::default();
    let config = TrainingConfig {
        max_epochs: 1,
        ..TrainingConfig::default()
    };
    let (outcome, ck) = train(&examples(20, 0), &examples(8, 50), &encoder, ScoreKind::RadgraphF1, &config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    ck.save(dir.path(), Some(&outcome)).unwrap();
    let weights = dir.path().join("weights.bin");
    let mut bytes = std::fs::read(&weights).unwrap();
    bytes[0] ^= 1;
    std::fs::write(&weights, bytes).unwrap();
    let err = EstimatorCheckpoint::load(dir.path()).unwrap_err();
    assert!(err.is_input_error());
}
