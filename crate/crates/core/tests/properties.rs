//! Property tests across module boundaries.

use proptest::prelude::*;
use radeval_core::analysis::{dependent_overlapping_test, Alternative, OverlapTestInput, TestVariant};
use radeval_core::clustering::{cluster_quality, kmeans, pca_project, MeshVectorMatrix};
use radeval_core::corpus::{classify_normalcy, curate, Normalcy, PhraseFilterList, Report, NORMAL_IMPRESSION_PHRASES};
use radeval_core::estimator::{combine, SentenceEmbedding};
use radeval_core::pairgen::{
    build_best_match, manifest_lines, split_corpus, PairCorpus, ScoredReportPair, Split, SplitOptions, Strategy,
};
use radeval_core::simscore::{radcliq, radgraph_f1, Entity, RadCliqCoefficients, RadGraphAnnotation, Relation};
use radeval_core::ScoreKind;
use std::collections::{BTreeSet, HashSet};

fn report(id: &str, mesh: Vec<String>, impression: String) -> Report {
    Report {
        id: id.into(),
        findings: "the heart is enlarged.".into(),
        impression,
        mesh_labels: mesh,
        normalcy: None,
    }
}

fn annotation(ents: &[usize], rels: &[(usize, usize)]) -> RadGraphAnnotation {
    let entity = |i: usize| Entity::new(format!("t{}", i % 4), if i < 4 { "OBS" } else { "ANAT" });
    let mut e: BTreeSet<Entity> = ents.iter().map(|&i| entity(i)).collect();
    let mut r = BTreeSet::new();
    for &(h, t) in rels {
        e.insert(entity(h));
        e.insert(entity(t));
        r.insert(Relation {
            head: entity(h),
            tail: entity(t),
            label: "modify".into(),
        });
    }
    RadGraphAnnotation::new(e, r).unwrap()
}

fn pairs_from(scores: &[(u8, u8, u8)]) -> Vec<ScoredReportPair> {
    scores
        .iter()
        .enumerate()
        .map(|(i, &(s, p, v))| ScoredReportPair {
            source_id: format!("s{s}"),
            paired_id: format!("p{p}_{i}"),
            score: v as f64 / 10.0,
            score_kind: ScoreKind::Radcliq,
            cluster_id: (s % 3) as usize,
        })
        .collect()
}

proptest! {
    #[test]
    fn any_listed_phrase_forces_normal(
        which in 0usize..15,
        before in "[a-z ]{0,20}",
        after in "[a-z .]{0,20}",
        mesh in "[a-z]{3,10}",
    ) {
        let impression = format!("{before} {} {after}", NORMAL_IMPRESSION_PHRASES[which]);
        let r = report("r", vec![format!("{mesh}/mild")], impression);
        prop_assert_eq!(classify_normalcy(&r, &PhraseFilterList::default()), Normalcy::Normal);
    }

    #[test]
    fn curation_is_idempotent(
        rows in prop::collection::vec(
            (prop::collection::vec(prop_oneof![Just("normal".to_string()), Just("no indexing".to_string()), "[a-z/]{1,10}"], 0..4),
             prop_oneof![Just("No active disease.".to_string()), "[a-z ]{0,30}"]),
            1..12)
    ) {
        let mut reports: Vec<Report> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (mesh, imp))| report(&format!("r{i}"), mesh, imp))
            .collect();
        let filters = PhraseFilterList::default();
        curate(&mut reports, &filters);
        let once = reports.clone();
        curate(&mut reports, &filters);
        prop_assert_eq!(reports, once);
    }

    #[test]
    fn kmeans_inertia_never_increases(points in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 8..40), k in 2usize..5, seed in 0u64..50) {
        let rows: Vec<Vec<f64>> = points.iter().map(|&(x, y)| vec![x, y]).collect();
        let m = MeshVectorMatrix::from_rows(&rows).unwrap();
        prop_assume!(m.distinct_rows() >= k);
        let a = kmeans(&m, k, seed).unwrap();
        for w in a.inertia_trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{:?}", a.inertia_trace);
        }
    }

    #[test]
    fn calinski_harabasz_translation_invariant(
        points in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, 0usize..3), 9..30),
        shift in (-100.0f64..100.0, -100.0f64..100.0),
    ) {
        let rows: Vec<Vec<f64>> = points.iter().map(|&(x, y, _)| vec![x, y]).collect();
        let moved: Vec<Vec<f64>> = points.iter().map(|&(x, y, _)| vec![x + shift.0, y + shift.1]).collect();
        let labels: Vec<usize> = points.iter().map(|p| p.2).collect();
        prop_assume!((0..3).all(|c| labels.contains(&c)));
        let a = cluster_quality(&MeshVectorMatrix::from_rows(&rows).unwrap(), &labels, 3).unwrap().calinski_harabasz;
        let b = cluster_quality(&MeshVectorMatrix::from_rows(&moved).unwrap(), &labels, 3).unwrap().calinski_harabasz;
        match (a, b) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{} vs {}", a, b),
            (a, b) => prop_assert_eq!(a.is_none(), b.is_none()),
        }
    }

    #[test]
    fn pca_components_uncorrelated(points in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 6..30)) {
        let m = MeshVectorMatrix::from_rows(&points).unwrap();
        let p = pca_project(&m, 2).unwrap();
        let n = p.len() as f64;
        let mean = |c: usize| p.iter().map(|r| r[c]).sum::<f64>() / n;
        let (m0, m1) = (mean(0), mean(1));
        let sxy: f64 = p.iter().map(|r| (r[0] - m0) * (r[1] - m1)).sum();
        let sxx: f64 = p.iter().map(|r| (r[0] - m0).powi(2)).sum();
        let syy: f64 = p.iter().map(|r| (r[1] - m1).powi(2)).sum();
        prop_assume!(sxx > 1e-9 && syy > 1e-9);
        prop_assert!((sxy / (sxx * syy).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn radgraph_f1_symmetric_and_bounded(
        a in prop::collection::vec(0usize..8, 0..6),
        b in prop::collection::vec(0usize..8, 0..6),
        ra in prop::collection::vec((0usize..8, 0usize..8), 0..3),
        rb in prop::collection::vec((0usize..8, 0usize..8), 0..3),
    ) {
        let (x, y) = (annotation(&a, &ra), annotation(&b, &rb));
        let f = radgraph_f1(&x, &y);
        prop_assert_eq!(f, radgraph_f1(&y, &x));
        prop_assert!((0.0..=1.0).contains(&f));
    }

    #[test]
    fn radcliq_is_homogeneous_without_intercept(b in 0.0f64..1.0, r in 0.0f64..1.0, alpha in -3.0f64..3.0, w1 in -2.0f64..2.0, w2 in -2.0f64..2.0) {
        let c = RadCliqCoefficients { weight_bleu2: w1, weight_radgraph: w2, intercept: 0.0 };
        let lhs = radcliq(alpha * b, alpha * r, &c);
        prop_assert!((lhs - alpha * radcliq(b, r, &c)).abs() < 1e-12);
    }

    #[test]
    fn best_match_has_one_pair_per_source(scores in prop::collection::vec((0u8..8, 0u8..8, 0u8..10), 1..60)) {
        let pairs = pairs_from(&scores);
        let sources: HashSet<&str> = pairs.iter().map(|p| p.source_id.as_str()).collect();
        prop_assert_eq!(build_best_match(&pairs).unwrap().pairs.len(), sources.len());
    }

    #[test]
    fn split_partitions_and_is_seed_stable(scores in prop::collection::vec((0u8..40, 0u8..8, 0u8..10), 30..120), seed in 0u64..1000) {
        let corpus = PairCorpus { pairs: pairs_from(&scores), strategy: Strategy::TopDecile, split: Split::Unsplit };
        let normalcy = |id: &str| {
            let n: u8 = id[1..].parse().ok()?;
            Some(if n.is_multiple_of(3) { Normalcy::Normal } else { Normalcy::Abnormal })
        };
        let strata: Vec<usize> = [Normalcy::Normal, Normalcy::Abnormal]
            .iter()
            .map(|k| corpus.pairs.iter().filter(|p| normalcy(&p.source_id) == Some(*k)).count())
            .collect();
        prop_assume!(strata.iter().all(|&s| s == 0 || s >= 3));
        let opts = SplitOptions { test_fraction: 0.2, validation_fraction: 0.2, seed };
        let a = split_corpus(&corpus, normalcy, opts).unwrap();
        let mut seen: Vec<&str> = a.iter().flat_map(|c| c.pairs.iter().map(|p| p.paired_id.as_str())).collect();
        seen.sort_unstable();
        let mut all: Vec<&str> = corpus.pairs.iter().map(|p| p.paired_id.as_str()).collect();
        all.sort_unstable();
        prop_assert_eq!(seen, all);
        let b = split_corpus(&corpus, normalcy, opts).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert_eq!(manifest_lines(x), manifest_lines(y));
        }
    }

    #[test]
    fn combine_swap_keeps_symmetric_blocks(v in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..20)) {
        let h: Vec<f64> = v.iter().map(|p| p.0).collect();
        let s: Vec<f64> = v.iter().map(|p| p.1).collect();
        let d = h.len();
        let hs = combine(&SentenceEmbedding(h.clone()), &SentenceEmbedding(s.clone())).unwrap().0;
        let sh = combine(&SentenceEmbedding(s), &SentenceEmbedding(h)).unwrap().0;
        prop_assert_eq!(&hs[..d], &sh[d..2 * d]);
        prop_assert_eq!(&hs[d..2 * d], &sh[..d]);
        prop_assert_eq!(&hs[2 * d..], &sh[2 * d..]);
    }

    #[test]
    fn two_sided_p_folds_one_sided(r_jk in -0.9f64..0.9, r_jh in -0.9f64..0.9, r_kh in -0.9f64..0.9, n in 4usize..300) {
        for variant in [TestVariant::OlkinZ, TestVariant::Williams, TestVariant::Hendrickson] {
            let mut input = OverlapTestInput { r_jk, r_jh, r_kh, n, alpha: 0.05, alternative: Alternative::OneSidedJhGreater };
            let Ok(one) = dependent_overlapping_test(&input, variant) else { continue };
            input.alternative = Alternative::TwoSided;
            let two = dependent_overlapping_test(&input, variant).unwrap();
            let p = one.p_value;
            prop_assert!((two.p_value - 2.0 * p.min(1.0 - p)).abs() < 1e-12);
        }
    }
}
