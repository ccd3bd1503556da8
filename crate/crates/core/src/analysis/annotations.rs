use crate::error::{Error, Result};
use log::warn;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    FalsePrediction,
    OmissionOfFinding,
    IncorrectLocation,
    IncorrectSeverity,
    SpuriousComparison,
    OmittedComparison,
    SpuriousUncertainty,
    OmittedUncertainty,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 8] = [
        ErrorCategory::FalsePrediction,
        ErrorCategory::OmissionOfFinding,
        ErrorCategory::IncorrectLocation,
        ErrorCategory::IncorrectSeverity,
        ErrorCategory::SpuriousComparison,
        ErrorCategory::OmittedComparison,
        ErrorCategory::SpuriousUncertainty,
        ErrorCategory::OmittedUncertainty,
    ];

    /// 1-based number used in annotation files.
    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_number(n: u8) -> Option<Self> {
        (1..=8).contains(&n).then(|| Self::ALL[n as usize - 1])
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::FalsePrediction => "false_prediction",
            ErrorCategory::OmissionOfFinding => "omission_of_finding",
            ErrorCategory::IncorrectLocation => "incorrect_location",
            ErrorCategory::IncorrectSeverity => "incorrect_severity",
            ErrorCategory::SpuriousComparison => "spurious_comparison",
            ErrorCategory::OmittedComparison => "omitted_comparison",
            ErrorCategory::SpuriousUncertainty => "spurious_uncertainty",
            ErrorCategory::OmittedUncertainty => "omitted_uncertainty",
        }
    }

    /// The uncertainty categories extend the original six-category taxonomy.
    pub fn is_extension(self) -> bool {
        matches!(self, ErrorCategory::SpuriousUncertainty | ErrorCategory::OmittedUncertainty)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCount {
    pub significant: u32,
    pub insignificant: u32,
}

impl ErrorCount {
    pub fn total(self) -> u32 {
        self.significant + self.insignificant
    }
}

/// One annotator's counts for one report, all eight categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub report_id: String,
    pub annotator_id: String,
    pub counts: [ErrorCount; 8],
}

impl AnnotationRecord {
    pub fn new(report_id: impl Into<String>, annotator_id: impl Into<String>) -> Self {
        Self {
            report_id: report_id.into(),
            annotator_id: annotator_id.into(),
            counts: [ErrorCount::default(); 8],
        }
    }

    pub fn count(&self, c: ErrorCategory) -> ErrorCount {
        self.counts[c as usize]
    }

    pub fn set(&mut self, c: ErrorCategory, significant: u32, insignificant: u32) {
        self.counts[c as usize] = ErrorCount {
            significant,
            insignificant,
        };
    }

    pub fn significant(&self) -> u32 {
        self.counts.iter().map(|c| c.significant).sum()
    }

    pub fn insignificant(&self) -> u32 {
        self.counts.iter().map(|c| c.insignificant).sum()
    }
}

#[derive(Deserialize)]
struct AnnotationRow {
    report_id: String,
    annotator_id: String,
    category: u8,
    significant_count: u32,
    insignificant_count: u32,
}

/// Reads long-format rows (`report_id, annotator_id, category,
/// significant_count, insignificant_count`); categories absent for a
/// (report, annotator) are zero. Records come out in first-seen order.
pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    for col in ["report_id", "annotator_id", "category", "significant_count", "insignificant_count"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::MissingColumn {
                path: path.to_path_buf(),
                column: col.to_string(),
            });
        }
    }
    let mut records: Vec<AnnotationRecord> = Vec::new();
    let mut index: HashMap<(String, String), usize> = HashMap::new();
    let mut seen = std::collections::HashSet::new();
    for row in rdr.deserialize() {
        let row: AnnotationRow = row.map_err(csv_err)?;
        let cat = ErrorCategory::from_number(row.category).ok_or_else(|| Error::Schema {
            path: path.to_path_buf(),
            message: format!("category {} outside 1..=8", row.category),
        })?;
        if !seen.insert((row.report_id.clone(), row.annotator_id.clone(), row.category)) {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                message: format!(
                    "duplicate category {} for report {} annotator {}",
                    row.category, row.report_id, row.annotator_id
                ),
            });
        }
        let key = (row.report_id.clone(), row.annotator_id.clone());
        let i = *index.entry(key).or_insert_with(|| {
            records.push(AnnotationRecord::new(&row.report_id, &row.annotator_id));
            records.len() - 1
        });
        records[i].set(cat, row.significant_count, row.insignificant_count);
    }
    Ok(records)
}

/// Per-report means across annotators.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregatedReport {
    pub report_id: String,
    pub annotators: usize,
    pub mean_significant: f64,
    pub mean_insignificant: f64,
    pub mean_total: f64,
}

/// Means over annotators per report, reports in first-seen order. A consensus
/// annotation is a single-annotator record.
pub fn aggregate_annotations(records: &[AnnotationRecord]) -> Vec<AggregatedReport> {
    let mut order = Vec::new();
    let mut sums: HashMap<&str, (usize, u64, u64)> = HashMap::new();
    for r in records {
        let e = sums.entry(r.report_id.as_str()).or_insert_with(|| {
            order.push(r.report_id.as_str());
            (0, 0, 0)
        });
        e.0 += 1;
        e.1 += u64::from(r.significant());
        e.2 += u64::from(r.insignificant());
    }
    order
        .into_iter()
        .map(|id| {
            let (k, s, i) = sums[id];
            let k_f = k as f64;
            AggregatedReport {
                report_id: id.to_string(),
                annotators: k,
                mean_significant: s as f64 / k_f,
                mean_insignificant: i as f64 / k_f,
                mean_total: (s + i) as f64 / k_f,
            }
        })
        .collect()
}

/// Like [`aggregate_annotations`] but in the order of `report_ids`; ids with
/// no records are dropped with a warning.
pub fn aggregate_annotations_for(report_ids: &[String], records: &[AnnotationRecord]) -> Vec<AggregatedReport> {
    let by_id: HashMap<String, AggregatedReport> = aggregate_annotations(records)
        .into_iter()
        .map(|a| (a.report_id.clone(), a))
        .collect();
    report_ids
        .iter()
        .filter_map(|id| {
            let found = by_id.get(id).cloned();
            if found.is_none() {
                warn!("report {id} has no annotations; excluded");
            }
            found
        })
        .collect()
}

/// Category-wise sums over all records.
pub fn category_totals(records: &[AnnotationRecord]) -> BTreeMap<ErrorCategory, (u64, u64)> {
    let mut out: BTreeMap<ErrorCategory, (u64, u64)> = ErrorCategory::ALL.iter().map(|&c| (c, (0, 0))).collect();
    for r in records {
        for c in ErrorCategory::ALL {
            let e = out.get_mut(&c).expect("all categories present");
            e.0 += u64::from(r.count(c).significant);
            e.1 += u64::from(r.count(c).insignificant);
        }
    }
    out
}

/// Reports whose mean total error count exceeds `threshold`.
pub fn filter_noisy(aggregated: &[AggregatedReport], threshold: f64) -> Vec<AggregatedReport> {
    aggregated.iter().filter(|a| a.mean_total > threshold).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(report: &str, annotator: &str, sig: u32, insig: u32) -> AnnotationRecord {
        let mut r = AnnotationRecord::new(report, annotator);
        r.set(ErrorCategory::OmissionOfFinding, sig, insig);
        r
    }

    #[test]
    fn categories_number_round_trip() {
        for c in ErrorCategory::ALL {
            assert_eq!(ErrorCategory::from_number(c.number()), Some(c));
        }
        assert_eq!(ErrorCategory::from_number(0), None);
        assert_eq!(ErrorCategory::from_number(9), None);
        assert_eq!(ErrorCategory::ALL.iter().filter(|c| c.is_extension()).count(), 2);
    }

    #[test]
    fn means() {
        let a = aggregate_annotations(&[rec("r", "a", 1, 1), rec("r", "b", 4, 0)]);
        assert_eq!(a[0].mean_total, 3.0);
        assert_eq!(a[0].mean_significant, 2.5);
        let single = aggregate_annotations(&[rec("r", "a", 2, 5)]);
        assert_eq!((single[0].mean_significant, single[0].mean_insignificant), (2.0, 5.0));
    }

    #[test]
    fn noisy_filter_is_strict() {
        let agg: Vec<_> = [1, 3, 4]
            .iter()
            .enumerate()
            .flat_map(|(i, &t)| aggregate_annotations(&[rec(&i.to_string(), "a", t, 0)]))
            .collect();
        assert_eq!(filter_noisy(&agg, 3.0).len(), 1);
        assert_eq!(filter_noisy(&agg, 0.0).len(), 3);
    }

    #[test]
    fn missing_reports_are_dropped() {
        let ids = vec!["x".to_string(), "r".to_string()];
        let a = aggregate_annotations_for(&ids, &[rec("r", "a", 1, 0)]);
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].report_id, "r");
    }

    #[test]
    fn csv_loading() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::write(
            &p,
            "report_id,annotator_id,category,significant_count,insignificant_count\n\
             r1,a,1,2,0\nr1,a,6,1,1\nr1,b,2,0,3\n",
        )
        .unwrap();
        let recs = load_annotations(&p).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].significant(), 3);
        assert_eq!(recs[0].count(ErrorCategory::OmittedComparison).insignificant, 1);
        std::fs::write(&p, "report_id,annotator_id,category,significant_count,insignificant_count\nr,a,9,0,0\n").unwrap();
        assert!(matches!(load_annotations(&p), Err(Error::Schema { .. })));
        std::fs::write(&p, "report_id,category\nr,1\n").unwrap();
        assert!(matches!(load_annotations(&p), Err(Error::MissingColumn { .. })));
    }

    proptest! {
        #[test]
        fn annotator_order_does_not_matter(counts in prop::collection::vec((0u32..9, 0u32..9), 1..8), rot in 0usize..8) {
            let recs: Vec<_> = counts.iter().enumerate().map(|(i, &(s, n))| rec("r", &i.to_string(), s, n)).collect();
            let mut shuffled = recs.clone();
            shuffled.rotate_left(rot % recs.len());
            shuffled.reverse();
            prop_assert_eq!(aggregate_annotations(&recs), aggregate_annotations(&shuffled));
        }

        #[test]
        fn noisy_filter_nests(totals in prop::collection::vec(0u32..10, 0..30), t1 in 0u32..10, dt in 0u32..5) {
            let recs: Vec<_> = totals.iter().enumerate().map(|(i, &t)| rec(&i.to_string(), "a", t, 0)).collect();
            let agg = aggregate_annotations(&recs);
            let lo = filter_noisy(&agg, t1 as f64);
            let hi = filter_noisy(&agg, (t1 + dt) as f64);
            prop_assert!(hi.iter().all(|h| lo.contains(h)));
        }
    }
}
