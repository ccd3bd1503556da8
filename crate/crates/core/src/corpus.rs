//! Report collections: ingestion, MeSH label cleaning and normal/abnormal
//! classification.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

/// MeSH values that carry no clinical content and are dropped before clustering.
pub const MESH_REMOVAL_VALUES: [&str; 2] = ["no indexing", "technical quality of image unsatisfactory"];

/// Impression phrases that mark a report as normal.
pub const NORMAL_IMPRESSION_PHRASES: [&str; 15] = [
    "No acute cardiopulmonary abnormality",
    "No acute cardiopulmonary abnormalities",
    "Negative for acute abnormality",
    "No evidence of active disease",
    "No acute cardiopulmonary process",
    "No acute cardiopulmonary disease",
    "No acute cardiopulmonary findings",
    "No acute pulmonary findings",
    "No acute findings",
    "No acute cardiopulmonary abnormality identified",
    "No acute cardiopulmonary abnormality seen",
    "No acute cardiopulmonary abnormality detected",
    "No acute cardiopulmonary finding",
    "No active disease",
    "No acute disease",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Normalcy {
    Normal,
    Abnormal,
}

impl Normalcy {
    pub fn as_str(self) -> &'static str {
        match self {
            Normalcy::Normal => "normal",
            Normalcy::Abnormal => "abnormal",
        }
    }
}

/// One radiology study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub id: String,
    pub findings: String,
    pub impression: String,
    pub mesh_labels: Vec<String>,
    #[serde(default)]
    pub normalcy: Option<Normalcy>,
}

impl Report {
    /// Findings followed by impression; the text the similarity metrics and the
    /// estimator see.
    pub fn text(&self) -> String {
        match (self.findings.trim(), self.impression.trim()) {
            ("", i) => i.to_string(),
            (f, "") => f.to_string(),
            (f, i) => format!("{f} {i}"),
        }
    }

    /// First MeSH label, if any.
    pub fn mesh0(&self) -> Option<&str> {
        self.mesh_labels.first().map(String::as_str)
    }
}

/// Normal-impression phrases, normalized for matching.
#[derive(Debug, Clone, PartialEq)]
pub struct PhraseFilterList {
    phrases: Vec<String>,
}

impl PhraseFilterList {
    pub fn new<I, S>(phrases: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            phrases: phrases.into_iter().map(|p| normalize_phrase(p.as_ref())).collect(),
        }
    }

    pub fn phrases(&self) -> &[String] {
        &self.phrases
    }

    pub fn matches(&self, impression: &str) -> bool {
        let text = normalize_phrase(impression);
        self.phrases.iter().any(|p| !p.is_empty() && text.contains(p.as_str()))
    }
}

impl Default for PhraseFilterList {
    fn default() -> Self {
        Self::new(NORMAL_IMPRESSION_PHRASES)
    }
}

/// Lowercase, collapse whitespace, drop terminal punctuation.
fn normalize_phrase(s: &str) -> String {
    let collapsed = s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Csv,
    Jsonl,
}

impl InputFormat {
    /// Guesses from the file extension; anything but `.jsonl`/`.json` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => InputFormat::Jsonl,
            _ => InputFormat::Csv,
        }
    }
}

/// Source column (or key) names for the report fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub id: String,
    pub findings: String,
    pub impression: String,
    pub mesh: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            id: "id".into(),
            findings: "findings".into(),
            impression: "impression".into(),
            mesh: "mesh".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadOptions {
    pub columns: ColumnMap,
    /// Separator between MeSH labels in a single cell. "/" is reserved for
    /// qualifiers inside one label.
    pub mesh_delimiter: String,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            columns: ColumnMap::default(),
            mesh_delimiter: ",".into(),
        }
    }
}

fn split_mesh(cell: &str, delimiter: &str) -> Vec<String> {
    if cell.trim().is_empty() {
        return Vec::new();
    }
    let parts: Vec<&str> = if delimiter.is_empty() {
        vec![cell]
    } else {
        cell.split(delimiter).collect()
    };
    parts
        .into_iter()
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Loads a report collection. Normalcy is left unset.
pub fn load_reports(path: &Path, format: InputFormat, opts: &LoadOptions) -> Result<Vec<Report>> {
    let reports = match format {
        InputFormat::Csv => load_csv(path, opts)?,
        InputFormat::Jsonl => load_jsonl(path, opts)?,
    };
    check_unique_ids(&reports)?;
    Ok(reports)
}

fn load_csv(path: &Path, opts: &LoadOptions) -> Result<Vec<Report>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let cols = &opts.columns;
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let (id, findings, impression, mesh) = (
        find(&cols.id)?,
        find(&cols.findings)?,
        find(&cols.impression)?,
        find(&cols.mesh)?,
    );
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let get = |i: usize| row.get(i).unwrap_or("").to_string();
        out.push(Report {
            id: get(id).trim().to_string(),
            findings: get(findings),
            impression: get(impression),
            mesh_labels: split_mesh(&get(mesh), &opts.mesh_delimiter),
            normalcy: None,
        });
    }
    Ok(out)
}

fn load_jsonl(path: &Path, opts: &LoadOptions) -> Result<Vec<Report>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let cols = &opts.columns;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            line: lineno + 1,
            source,
        })?;
        let field = |name: &str| {
            value.get(name).ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
        };
        let text = |name: &str| -> Result<String> {
            match field(name)? {
                serde_json::Value::String(s) => Ok(s.clone()),
                serde_json::Value::Null => Ok(String::new()),
                other => Ok(other.to_string()),
            }
        };
        let mesh_labels = match field(&cols.mesh)? {
            serde_json::Value::Array(items) => items
                .iter()
                .filter_map(|v| v.as_str())
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect(),
            serde_json::Value::String(s) => split_mesh(s, &opts.mesh_delimiter),
            serde_json::Value::Null => Vec::new(),
            other => {
                return Err(Error::Schema {
                    path: path.to_path_buf(),
                    message: format!("line {}: mesh must be a string or array, got {other}", lineno + 1),
                })
            }
        };
        let normalcy = match value.get("normalcy").and_then(|v| v.as_str()) {
            Some("normal") | Some("Normal") => Some(Normalcy::Normal),
            Some("abnormal") | Some("Abnormal") => Some(Normalcy::Abnormal),
            _ => None,
        };
        out.push(Report {
            id: text(&cols.id)?.trim().to_string(),
            findings: text(&cols.findings)?,
            impression: text(&cols.impression)?,
            mesh_labels,
            normalcy,
        });
    }
    Ok(out)
}

fn check_unique_ids(reports: &[Report]) -> Result<()> {
    let mut seen = HashSet::new();
    let mut dups = Vec::new();
    for r in reports {
        if !seen.insert(r.id.as_str()) && !dups.contains(&r.id) {
            dups.push(r.id.clone());
        }
    }
    if dups.is_empty() {
        Ok(())
    } else {
        Err(Error::DuplicateIds(dups))
    }
}

/// Drops the non-informative MeSH values (case-insensitive), keeping order.
pub fn clean_mesh(labels: &[String]) -> Vec<String> {
    labels
        .iter()
        .filter(|l| {
            let l = l.trim().to_lowercase();
            !MESH_REMOVAL_VALUES.contains(&l.as_str())
        })
        .cloned()
        .collect()
}

/// Normal iff the first MeSH label is "normal" or the impression contains a
/// normal-impression phrase.
pub fn classify_normalcy(report: &Report, filters: &PhraseFilterList) -> Normalcy {
    let mesh_normal = report
        .mesh0()
        .map(|m| m.trim().eq_ignore_ascii_case("normal"))
        .unwrap_or(false);
    if mesh_normal || filters.matches(&report.impression) {
        Normalcy::Normal
    } else {
        Normalcy::Abnormal
    }
}

/// Cleans MeSH labels and sets normalcy on every report in place.
pub fn curate(reports: &mut [Report], filters: &PhraseFilterList) {
    for r in reports.iter_mut() {
        r.mesh_labels = clean_mesh(&r.mesh_labels);
        r.normalcy = Some(classify_normalcy(r, filters));
    }
}

/// Keeps reports that have a second MeSH label.
pub fn drop_empty_secondary_mesh(reports: Vec<Report>) -> Vec<Report> {
    reports.into_iter().filter(|r| r.mesh_labels.len() > 1).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurationSummary {
    pub total: usize,
    pub normal: usize,
    pub abnormal: usize,
    pub abnormal_share: f64,
}

pub fn summarize(reports: &[Report]) -> CurationSummary {
    let abnormal = reports
        .iter()
        .filter(|r| r.normalcy == Some(Normalcy::Abnormal))
        .count();
    let normal = reports.iter().filter(|r| r.normalcy == Some(Normalcy::Normal)).count();
    let total = reports.len();
    CurationSummary {
        total,
        normal,
        abnormal,
        abnormal_share: if total == 0 { 0.0 } else { abnormal as f64 / total as f64 },
    }
}

/// Id → index lookup for a collection.
pub fn index_by_id(reports: &[Report]) -> HashMap<&str, usize> {
    reports.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect()
}

pub fn write_jsonl(path: &Path, reports: &[Report]) -> Result<()> {
    let mut buf = String::new();
    for r in reports {
        buf.push_str(&serde_json::to_string(r).expect("report serializes"));
        buf.push('\n');
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads a file written by [`write_jsonl`], keeping labels and normalcy as stored.
pub fn read_jsonl(path: &Path) -> Result<Vec<Report>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: Report = serde_json::from_str(&line).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", n + 1),
        })?;
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn report(mesh: &[&str], impression: &str) -> Report {
        Report {
            id: "r".into(),
            findings: String::new(),
            impression: impression.into(),
            mesh_labels: mesh.iter().map(|s| s.to_string()).collect(),
            normalcy: None,
        }
    }

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn clean_mesh_examples() {
        assert_eq!(clean_mesh(&strings(&["normal"])), strings(&["normal"]));
        assert_eq!(
            clean_mesh(&strings(&["Cardiomegaly/mild", "no indexing"])),
            strings(&["Cardiomegaly/mild"])
        );
        assert!(clean_mesh(&strings(&["technical quality of image unsatisfactory"])).is_empty());
        assert!(clean_mesh(&[]).is_empty());
        assert_eq!(clean_mesh(&strings(&["No Indexing", "lung"])), strings(&["lung"]));
    }

    #[test]
    fn classify_examples() {
        let f = PhraseFilterList::default();
        assert_eq!(classify_normalcy(&report(&["normal"], ""), &f), Normalcy::Normal);
        assert_eq!(
            classify_normalcy(&report(&["opacity/lung"], "No acute cardiopulmonary abnormality."), &f),
            Normalcy::Normal
        );
        assert_eq!(
            classify_normalcy(&report(&["opacity/lung"], "right upper lobe opacity"), &f),
            Normalcy::Abnormal
        );
        assert_eq!(classify_normalcy(&report(&[], ""), &f), Normalcy::Abnormal);
    }

    #[test]
    fn phrase_matching_ignores_case_spacing_and_terminal_punctuation() {
        let f = PhraseFilterList::default();
        assert!(f.matches("1. NO ACUTE   DISEASE!!"));
        assert!(f.matches("Stable granuloma. No evidence of active disease."));
        assert!(!f.matches("Acute disease in the right lung"));
        assert_eq!(f.phrases().len(), 15);
    }

    #[test]
    fn every_phrase_forces_normal() {
        let f = PhraseFilterList::default();
        for p in NORMAL_IMPRESSION_PHRASES {
            let r = report(&["opacity/lung/upper lobe/right"], &format!("Right upper lobe opacity. {p}."));
            assert_eq!(classify_normalcy(&r, &f), Normalcy::Normal, "{p}");
        }
    }

    #[test]
    fn load_csv_preserves_order_and_splits_mesh() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let mut f = File::create(&path).unwrap();
        writeln!(f, "id,findings,impression,mesh").unwrap();
        for i in 0..10 {
            writeln!(f, "r{i},heart normal,no acute disease,\"lung/hypoinflation, cardiomegaly/mild\"").unwrap();
        }
        writeln!(f, "r10,,,normal").unwrap();
        drop(f);
        let reports = load_reports(&path, InputFormat::Csv, &LoadOptions::default()).unwrap();
        assert_eq!(reports.len(), 11);
        let ids: Vec<_> = reports.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids[..3], ["r0", "r1", "r2"]);
        assert_eq!(reports[0].mesh_labels, strings(&["lung/hypoinflation", "cardiomegaly/mild"]));
        assert_eq!(reports[10].mesh_labels, strings(&["normal"]));
        assert!(reports.iter().all(|r| r.normalcy.is_none()));
    }

    #[test]
    fn load_csv_missing_column_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        std::fs::write(&path, "id,findings,mesh\nr1,x,normal\n").unwrap();
        match load_reports(&path, InputFormat::Csv, &LoadOptions::default()) {
            Err(Error::MissingColumn { column, .. }) => assert_eq!(column, "impression"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        std::fs::write(
            &path,
            concat!(
                r#"{"id":"a","findings":"","impression":"","mesh":["normal"]}"#,
                "\n",
                r#"{"id":"a","findings":"","impression":"","mesh":"normal"}"#,
                "\n"
            ),
        )
        .unwrap();
        match load_reports(&path, InputFormat::Jsonl, &LoadOptions::default()) {
            Err(Error::DuplicateIds(ids)) => assert_eq!(ids, vec!["a".to_string()]),
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn curate_is_idempotent() {
        let f = PhraseFilterList::default();
        let mut reports = vec![
            report(&["no indexing", "normal"], ""),
            report(&["lung/hypoinflation"], "low lung volumes"),
        ];
        curate(&mut reports, &f);
        let once = reports.clone();
        curate(&mut reports, &f);
        assert_eq!(once, reports);
        assert_eq!(reports[0].normalcy, Some(Normalcy::Normal));
        assert_eq!(reports[1].normalcy, Some(Normalcy::Abnormal));
    }

    #[test]
    fn optional_mesh1_filter() {
        let kept = drop_empty_secondary_mesh(vec![report(&["a"], ""), report(&["a", "b"], "")]);
        assert_eq!(kept.len(), 1);
    }

    proptest::proptest! {
        #[test]
        fn clean_mesh_idempotent(labels in proptest::collection::vec(
            proptest::prop_oneof![
                proptest::strategy::Just("no indexing".to_string()),
                proptest::strategy::Just("Technical Quality of Image Unsatisfactory".to_string()),
                "[a-z/ ]{0,12}",
            ], 0..8)) {
            let once = clean_mesh(&labels);
            proptest::prop_assert_eq!(clean_mesh(&once), once);
        }
    }
}
