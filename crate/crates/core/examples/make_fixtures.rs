//! Regenerates the files under `fixtures/`.
//!
//! ```text
//! cargo run -p radeval-core --example make_fixtures -- fixtures
//! ```
//!
//! Everything is derived from fixed seeds, so rerunning produces identical files.

use radeval_core::analysis::{rkh_sweep, ErrorCategory, TestVariant};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

struct Topic {
    mesh: &'static [&'static str],
    findings: &'static [&'static str],
    impressions: &'static [&'static str],
}

const BACKGROUND: &[&str] = &[
    "the heart size is normal.",
    "the mediastinal contours are within normal limits.",
    "no pneumothorax is seen.",
    "the osseous structures are intact.",
    "pulmonary vasculature is normal.",
];

const TOPICS: &[Topic] = &[
    Topic {
        mesh: &["normal"],
        findings: &[
            "the lungs are clear.",
            "no focal consolidation pleural effusion or pneumothorax.",
            "cardiomediastinal silhouette is within normal limits.",
        ],
        impressions: &[
            "no acute cardiopulmonary abnormality.",
            "no active disease.",
            "negative for acute abnormality.",
            "no acute cardiopulmonary process.",
        ],
    },
    Topic {
        mesh: &["cardiomegaly/mild", "cardiomegaly/moderate", "pulmonary congestion", "cardiomegaly/borderline"],
        findings: &[
            "the heart is mildly enlarged.",
            "there is moderate cardiomegaly.",
            "pulmonary vascular congestion is present.",
            "the cardiac silhouette is enlarged.",
        ],
        impressions: &["cardiomegaly without acute edema.", "mild cardiomegaly.", "enlarged heart with congestion."],
    },
    Topic {
        mesh: &["opacity/lung/base/left", "opacity/lung/base/right", "pulmonary atelectasis/base/left", "airspace disease/lung/right"],
        findings: &[
            "there is patchy opacity in the left lung base.",
            "right basilar airspace opacity is present.",
            "left basilar atelectasis is noted.",
            "streaky opacity in the right lower lobe.",
        ],
        impressions: &["left basilar atelectasis.", "right lower lobe opacity concerning for pneumonia.", "basilar opacity."],
    },
    Topic {
        mesh: &[
            "calcified granuloma/lung/upper lobe/right",
            "calcified granuloma/lung/upper lobe/left",
            "granulomatous disease",
            "nodule/lung/upper lobe/right",
        ],
        findings: &[
            "a calcified granuloma is seen in the right upper lobe.",
            "there are calcified granulomas in the left upper lobe.",
            "small nodule in the right upper lobe.",
            "sequela of prior granulomatous disease.",
        ],
        impressions: &["calcified granuloma.", "old granulomatous disease.", "no acute disease."],
    },
    Topic {
        mesh: &["pleural effusion/left/small", "pleural effusion/bilateral", "pleural effusion/right/small", "pleural thickening/left"],
        findings: &[
            "there is a small left pleural effusion.",
            "small bilateral pleural effusions are present.",
            "blunting of the right costophrenic angle.",
            "left pleural thickening is noted.",
        ],
        impressions: &["small left pleural effusion.", "bilateral pleural effusions.", "small right effusion."],
    },
    Topic {
        mesh: &["spine/degenerative/mild", "thoracic vertebrae/degenerative", "spondylosis/thoracic vertebrae", "scoliosis/mild"],
        findings: &[
            "degenerative changes of the thoracic spine.",
            "mild thoracic spondylosis.",
            "mild scoliosis of the thoracic spine.",
            "degenerative disc disease of the spine.",
        ],
        impressions: &["degenerative changes of the spine.", "no acute findings.", "thoracic spondylosis."],
    },
];

const LEXICON: &[(&str, &str)] = &[
    ("heart", "ANAT-DP"),
    ("cardiac silhouette", "ANAT-DP"),
    ("cardiomediastinal silhouette", "ANAT-DP"),
    ("mediastinal contours", "ANAT-DP"),
    ("lungs", "ANAT-DP"),
    ("lung", "ANAT-DP"),
    ("left lung base", "ANAT-DP"),
    ("right lower lobe", "ANAT-DP"),
    ("right upper lobe", "ANAT-DP"),
    ("left upper lobe", "ANAT-DP"),
    ("costophrenic angle", "ANAT-DP"),
    ("thoracic spine", "ANAT-DP"),
    ("spine", "ANAT-DP"),
    ("pleural", "ANAT-DP"),
    ("osseous structures", "ANAT-DP"),
    ("pulmonary vasculature", "ANAT-DP"),
    ("enlarged", "OBS-DP"),
    ("cardiomegaly", "OBS-DP"),
    ("congestion", "OBS-DP"),
    ("opacity", "OBS-DP"),
    ("atelectasis", "OBS-DP"),
    ("pneumonia", "OBS-U"),
    ("granuloma", "OBS-DP"),
    ("granulomas", "OBS-DP"),
    ("nodule", "OBS-DP"),
    ("effusion", "OBS-DP"),
    ("effusions", "OBS-DP"),
    ("pleural effusion", "OBS-DP"),
    ("thickening", "OBS-DP"),
    ("blunting", "OBS-DP"),
    ("degenerative changes", "OBS-DP"),
    ("spondylosis", "OBS-DP"),
    ("scoliosis", "OBS-DP"),
    ("edema", "OBS-DA"),
    ("pneumothorax", "OBS-DA"),
    ("consolidation", "OBS-DA"),
    ("clear", "OBS-DA"),
    ("normal", "OBS-DA"),
    ("intact", "OBS-DA"),
    ("mild", "OBS-DP"),
    ("moderate", "OBS-DP"),
    ("small", "OBS-DP"),
];

const ORACLES: [&str; 4] = ["bleu", "bertscore", "chexbert", "radgraph"];

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write(path: &Path, text: &str) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, text).unwrap();
    println!("wrote {}", path.display());
}

struct SynthReport {
    id: String,
    findings: Vec<String>,
    impression: String,
    mesh: Vec<String>,
}

fn synth_reports(rng: &mut ChaCha8Rng, n: usize) -> Vec<SynthReport> {
    (0..n)
        .map(|i| {
            // Roughly a third normal, matching the usual abnormal share.
            let t = if rng.random_bool(0.34) { 0 } else { rng.random_range(1..TOPICS.len()) };
            let topic = &TOPICS[t];
            let k = rng.random_range(1..=2.min(topic.mesh.len()));
            let mut mesh: Vec<String> = topic
                .mesh
                .choose_multiple(rng, k)
                .map(|s| s.to_string())
                .collect();
            if t != 0 && rng.random_bool(0.2) {
                let other = &TOPICS[rng.random_range(1..TOPICS.len())];
                mesh.push(other.mesh.choose(rng).unwrap().to_string());
            }
            if rng.random_bool(0.05) {
                mesh.push("no indexing".into());
            }
            mesh.dedup();
            let k = rng.random_range(1..=3);
            let mut findings: Vec<String> = topic
                .findings
                .choose_multiple(rng, k)
                .map(|s| s.to_string())
                .collect();
            let k = rng.random_range(1..=3);
            findings.extend(BACKGROUND.choose_multiple(rng, k).map(|s| s.to_string()));
            SynthReport {
                id: format!("r{i:03}"),
                findings,
                impression: topic.impressions.choose(rng).unwrap().to_string(),
                mesh,
            }
        })
        .collect()
}

#[derive(Clone, Copy)]
enum Edit {
    Drop,
    Insert,
    Side,
    Severity,
}

/// Applies `k` edits to the sentences of a report and returns the new text and
/// the (category, significant) error list a careful reader would assign.
fn perturb(rng: &mut ChaCha8Rng, sentences: &[String], k: usize, weights: [u32; 4]) -> (String, Vec<(ErrorCategory, bool)>) {
    let mut s = sentences.to_vec();
    let mut errors = Vec::new();
    let edits = [Edit::Drop, Edit::Insert, Edit::Side, Edit::Severity];
    let total: u32 = weights.iter().sum();
    for _ in 0..k {
        let mut pick = rng.random_range(0..total);
        let mut e = edits[0];
        for (ed, w) in edits.iter().zip(weights) {
            if pick < w {
                e = *ed;
                break;
            }
            pick -= w;
        }
        match e {
            Edit::Drop if s.len() > 1 => {
                let i = rng.random_range(0..s.len());
                let gone = s.remove(i);
                let significant = !BACKGROUND.contains(&gone.as_str());
                errors.push((ErrorCategory::OmissionOfFinding, significant));
            }
            Edit::Side if s.iter().any(|x| x.contains("left") || x.contains("right")) => {
                let i = s.iter().position(|x| x.contains("left") || x.contains("right")).unwrap();
                s[i] = if s[i].contains("left") {
                    s[i].replace("left", "right")
                } else {
                    s[i].replace("right", "left")
                };
                errors.push((ErrorCategory::IncorrectLocation, rng.random_bool(0.5)));
            }
            Edit::Severity if s.iter().any(|x| x.contains("mild") || x.contains("small")) => {
                let i = s.iter().position(|x| x.contains("mild") || x.contains("small")).unwrap();
                s[i] = s[i].replace("mild", "moderate").replace("small", "large");
                errors.push((ErrorCategory::IncorrectSeverity, rng.random_bool(0.3)));
            }
            _ => {
                let topic = &TOPICS[rng.random_range(1..TOPICS.len())];
                let at = rng.random_range(0..=s.len());
                s.insert(at, topic.findings.choose(rng).unwrap().to_string());
                errors.push((ErrorCategory::FalsePrediction, true));
            }
        }
    }
    (s.join(" "), errors)
}

fn synthetic(dir: &Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(20_231_015);
    let reports = synth_reports(&mut rng, 200);
    let mut csv = String::from("id,findings,impression,mesh\n");
    for r in &reports {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            r.id,
            csv_field(&r.findings.join(" ")),
            csv_field(&r.impression),
            csv_field(&r.mesh.join(", "))
        );
    }
    write(&dir.join("reports.csv"), &csv);

    let mut lex = String::new();
    for (term, label) in LEXICON {
        let _ = writeln!(lex, "{term}\t{label}");
    }
    write(&dir.join("lexicon.tsv"), &lex);

    // 50 ground-truth studies, one generated report per oracle group.
    let mut gen = String::from("id,ground_truth,generated,oracle\n");
    let mut ann = String::from("report_id,annotator_id,category,significant_count,insignificant_count\n");
    let studies: Vec<&SynthReport> = reports.iter().filter(|r| r.mesh.first().map(String::as_str) != Some("normal")).take(50).collect();
    let weights = [[4, 3, 1, 1], [3, 2, 2, 2], [2, 4, 1, 1], [3, 3, 2, 1]];
    for (s, study) in studies.iter().enumerate() {
        let mut sentences = study.findings.clone();
        sentences.push(study.impression.clone());
        let truth = sentences.join(" ");
        for (o, oracle) in ORACLES.iter().enumerate() {
            let k = rng.random_range(0..=5);
            let (text, errors) = perturb(&mut rng, &sentences, k, weights[o]);
            let id = format!("g{s:02}_{oracle}");
            let _ = writeln!(gen, "{id},{},{},{oracle}", csv_field(&truth), csv_field(&text));
            for annotator in 0..3 {
                let mut counts = [(0u32, 0u32); 8];
                for &(c, sig) in &errors {
                    // Each annotator misses or reclassifies some errors.
                    if rng.random_bool(0.15) {
                        continue;
                    }
                    let sig = if rng.random_bool(0.1) { !sig } else { sig };
                    if sig {
                        counts[c as usize].0 += 1;
                    } else {
                        counts[c as usize].1 += 1;
                    }
                }
                if rng.random_bool(0.1) {
                    counts[ErrorCategory::OmittedComparison as usize].1 += 1;
                }
                for c in ErrorCategory::ALL {
                    let (a, b) = counts[c as usize];
                    if a + b > 0 {
                        let _ = writeln!(ann, "{id},a{annotator},{},{a},{b}", c.number());
                    }
                }
            }
        }
    }
    write(&dir.join("generated.csv"), &gen);
    write(&dir.join("annotations.csv"), &ann);
}

/// Consensus annotations for 30 noisy reports whose category sums are the
/// published statistics, plus 70 quieter reports for the 100-report set.
fn error_annotations(dir: &Path) {
    use ErrorCategory::*;
    let significant = [10u32, 64, 1, 0, 0, 17, 1, 3];
    let insignificant = [7u32, 36, 1, 1, 6, 7, 0, 0];
    let mut reports: Vec<[(u32, u32); 8]> = vec![[(0, 0); 8]; 30];
    // The two worked examples.
    reports[0][OmissionOfFinding as usize].0 = 5;
    reports[0][IncorrectLocation as usize].1 = 1;
    reports[1][OmissionOfFinding as usize].0 = 5;
    reports[1][OmittedComparison as usize].0 = 3;
    let mut sig_left = significant;
    let mut insig_left = insignificant;
    sig_left[OmissionOfFinding as usize] -= 10;
    sig_left[OmittedComparison as usize] -= 3;
    insig_left[IncorrectLocation as usize] -= 1;
    let mut units = Vec::new();
    for c in 0..8 {
        units.extend(std::iter::repeat_n((c, true), sig_left[c] as usize));
        units.extend(std::iter::repeat_n((c, false), insig_left[c] as usize));
    }
    assert_eq!(units.len(), 140);
    for (i, (c, sig)) in units.into_iter().enumerate() {
        let r = &mut reports[2 + i % 28][c];
        if sig {
            r.0 += 1;
        } else {
            r.1 += 1;
        }
    }
    let header = "report_id,annotator_id,category,significant_count,insignificant_count\n";
    let mut noisy = String::from(header);
    for (i, r) in reports.iter().enumerate() {
        for c in 0..8 {
            let _ = writeln!(noisy, "n{i:02},consensus,{},{},{}", c + 1, r[c].0, r[c].1);
        }
    }
    write(&dir.join("noisy_30.csv"), &noisy);

    let mut all = noisy.clone();
    for i in 0..70 {
        // Totals cycle through 0..=3, never above the noisy threshold.
        let total = i % 4;
        let sig = total / 2;
        let insig = total - sig;
        let cat = 1 + (i % 8);
        let _ = writeln!(all, "q{i:02},consensus,{cat},{sig},{insig}");
    }
    write(&dir.join("annotations_100.csv"), &all);
}

fn sweep(path: &Path) {
    let anchors = [(0.682, 0.786, 0.0084), (0.728, 0.813, 0.0131)];
    let variants = [TestVariant::OlkinZ, TestVariant::Williams, TestVariant::Hendrickson];
    let mut out = String::from("variant,r_jk,r_jh,n,target_p,r_kh,p_one_sided,reproduces\n");
    for v in variants {
        for (r_jk, r_jh, target) in anchors {
            for row in rkh_sweep(r_jk, r_jh, 50, v, 0.30, 0.95, 0.005) {
                let (p, hit) = match row.p_one_sided {
                    Some(p) => (format!("{p:.6}"), ((p - target).abs() <= 0.002).to_string()),
                    None => ("NA".to_string(), "false".to_string()),
                };
                let _ = writeln!(out, "{},{r_jk},{r_jh},50,{target},{:.3},{p},{hit}", v.as_str(), row.r_kh);
            }
        }
    }
    write(path, &out);
}

fn main() {
    let root: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()).into();
    synthetic(&root.join("synthetic"));
    error_annotations(&root.join("error_annotations"));
    sweep(&root.join("rkh_sweep.csv"));
}
