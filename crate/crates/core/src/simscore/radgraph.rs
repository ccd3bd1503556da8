//! Entity/relation graphs of reports and their overlap F1.

use super::tokenize;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Entity {
    pub text: String,
    pub label: String,
}

impl Entity {
    pub fn new(text: impl Into<String>, label: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            label: label.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Relation {
    pub head: Entity,
    pub tail: Entity,
    pub label: String,
}

/// Clinical entities and relations extracted from one report.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RadGraphAnnotation {
    entities: BTreeSet<Entity>,
    relations: BTreeSet<Relation>,
}

impl RadGraphAnnotation {
    /// Fails if a relation references an entity outside the entity set.
    pub fn new(entities: BTreeSet<Entity>, relations: BTreeSet<Relation>) -> Result<Self> {
        for r in &relations {
            for end in [&r.head, &r.tail] {
                if !entities.contains(end) {
                    return Err(Error::InvalidParameter(format!(
                        "relation endpoint ({}, {}) is not an entity",
                        end.text, end.label
                    )));
                }
            }
        }
        Ok(Self { entities, relations })
    }

    pub fn entities(&self) -> &BTreeSet<Entity> {
        &self.entities
    }

    pub fn relations(&self) -> &BTreeSet<Relation> {
        &self.relations
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }
}

/// Value of a component F1 when both sides are empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyComponent {
    #[default]
    Perfect,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadGraphOptions {
    /// Weight of the relation F1; the entity F1 gets the remainder.
    pub relation_weight: f64,
    pub empty: EmptyComponent,
}

impl Default for RadGraphOptions {
    fn default() -> Self {
        Self {
            relation_weight: 0.5,
            empty: EmptyComponent::Perfect,
        }
    }
}

fn set_f1<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>, empty: EmptyComponent) -> f64 {
    if a.is_empty() && b.is_empty() {
        return match empty {
            EmptyComponent::Perfect => 1.0,
            EmptyComponent::Zero => 0.0,
        };
    }
    let inter = a.intersection(b).count() as f64;
    2.0 * inter / (a.len() + b.len()) as f64
}

/// Mean of exact-match entity F1 and relation F1.
pub fn radgraph_f1(a: &RadGraphAnnotation, b: &RadGraphAnnotation) -> f64 {
    radgraph_f1_with(a, b, RadGraphOptions::default())
}

pub fn radgraph_f1_with(a: &RadGraphAnnotation, b: &RadGraphAnnotation, opts: RadGraphOptions) -> f64 {
    let e = set_f1(&a.entities, &b.entities, opts.empty);
    let r = set_f1(&a.relations, &b.relations, opts.empty);
    (1.0 - opts.relation_weight) * e + opts.relation_weight * r
}

/// Term → entity label dictionary for the rule-based extractor.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    by_first: HashMap<String, Vec<(Vec<String>, String)>>,
    len: usize,
    max_window: usize,
}

impl Lexicon {
    pub fn new<I, S, L>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, L)>,
        S: AsRef<str>,
        L: Into<String>,
    {
        let mut lex = Lexicon {
            by_first: HashMap::new(),
            len: 0,
            max_window: 2,
        };
        for (term, label) in entries {
            let toks = tokenize(term.as_ref());
            if toks.is_empty() {
                continue;
            }
            let bucket = lex.by_first.entry(toks[0].clone()).or_default();
            if !bucket.iter().any(|(t, _)| *t == toks) {
                bucket.push((toks, label.into()));
                lex.len += 1;
            }
        }
        // longest terms first so the first hit is the longest match
        for bucket in lex.by_first.values_mut() {
            bucket.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        }
        lex
    }

    /// Maximum number of tokens between two entities that still get a relation.
    pub fn with_window(mut self, window: usize) -> Self {
        self.max_window = window;
        self
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Reads `term<TAB>label` lines; blank lines and `#` comments are skipped.
    pub fn load_tsv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (term, label) = line.split_once('\t').ok_or_else(|| Error::Schema {
                path: path.to_path_buf(),
                message: format!("line {}: expected term<TAB>label", i + 1),
            })?;
            entries.push((term.trim().to_string(), label.trim().to_string()));
        }
        Ok(Self::new(entries))
    }
}

fn is_anatomy(label: &str) -> bool {
    label.to_ascii_uppercase().starts_with("ANAT")
}

/// Dictionary-based stand-in for a learned entity/relation extractor.
///
/// Entities are longest lexicon matches scanned left to right. Consecutive
/// entities separated by at most the lexicon window get a relation:
/// `located_at` from observation to anatomy when exactly one side is anatomy,
/// otherwise `modify` from the later entity to the earlier one.
pub fn extract_radgraph_stub(text: &str, lexicon: &Lexicon) -> Result<RadGraphAnnotation> {
    if lexicon.is_empty() {
        return Err(Error::Empty("lexicon"));
    }
    let toks = tokenize(text);
    let mut found: Vec<(usize, usize, Entity)> = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        let hit = lexicon.by_first.get(&toks[i]).and_then(|bucket| {
            bucket
                .iter()
                .find(|(term, _)| toks.len() - i >= term.len() && toks[i..i + term.len()] == term[..])
        });
        match hit {
            Some((term, label)) => {
                found.push((i, i + term.len(), Entity::new(term.join(" "), label.clone())));
                i += term.len();
            }
            None => i += 1,
        }
    }
    let mut relations = BTreeSet::new();
    for w in found.windows(2) {
        let (_, end, ref a) = w[0];
        let (start, _, ref b) = w[1];
        if start - end > lexicon.max_window || a == b {
            continue;
        }
        let rel = match (is_anatomy(&a.label), is_anatomy(&b.label)) {
            (false, true) => Relation {
                head: a.clone(),
                tail: b.clone(),
                label: "located_at".into(),
            },
            (true, false) => Relation {
                head: b.clone(),
                tail: a.clone(),
                label: "located_at".into(),
            },
            _ => Relation {
                head: b.clone(),
                tail: a.clone(),
                label: "modify".into(),
            },
        };
        relations.insert(rel);
    }
    let entities = found.into_iter().map(|(_, _, e)| e).collect();
    RadGraphAnnotation::new(entities, relations)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(ents: &[(&str, &str)], rels: &[(usize, usize, &str)]) -> RadGraphAnnotation {
        let list: Vec<Entity> = ents.iter().map(|(t, l)| Entity::new(*t, *l)).collect();
        let relations = rels
            .iter()
            .map(|&(h, t, l)| Relation {
                head: list[h].clone(),
                tail: list[t].clone(),
                label: l.into(),
            })
            .collect();
        RadGraphAnnotation::new(list.into_iter().collect(), relations).unwrap()
    }

    #[test]
    fn identical_is_one() {
        let a = ann(&[("opacity", "OBS"), ("lobe", "ANAT")], &[(0, 1, "located_at")]);
        assert_eq!(radgraph_f1(&a, &a), 1.0);
    }

    #[test]
    fn disjoint_entities_no_relations() {
        let a = ann(&[("opacity", "OBS")], &[]);
        let b = ann(&[("effusion", "OBS")], &[]);
        assert!((radgraph_f1(&a, &b) - 0.5).abs() < 1e-12);
        let zero = RadGraphOptions {
            empty: EmptyComponent::Zero,
            ..Default::default()
        };
        assert_eq!(radgraph_f1_with(&a, &b, zero), 0.0);
    }

    #[test]
    fn partial_entity_overlap() {
        let a = ann(&[("e1", "OBS"), ("e2", "OBS")], &[(0, 0, "modify")]);
        let b = ann(&[("e1", "OBS")], &[(0, 0, "modify")]);
        let want = (2.0 / 3.0 + 1.0) / 2.0;
        assert!((radgraph_f1(&a, &b) - want).abs() < 1e-12);
        assert!((radgraph_f1(&b, &a) - want).abs() < 1e-12);
    }

    #[test]
    fn dangling_relation_rejected() {
        let rels = BTreeSet::from([Relation {
            head: Entity::new("x", "OBS"),
            tail: Entity::new("y", "OBS"),
            label: "modify".into(),
        }]);
        assert!(RadGraphAnnotation::new(BTreeSet::new(), rels).is_err());
    }

    fn lex() -> Lexicon {
        Lexicon::new([
            ("opacity", "OBS-DP"),
            ("upper lobe", "ANAT-DP"),
            ("right upper lobe", "ANAT-DP"),
            ("effusion", "OBS-DP"),
            ("pleural", "ANAT-DP"),
        ])
    }

    #[test]
    fn stub_empty_and_single() {
        let l = lex();
        assert!(extract_radgraph_stub("heart size is normal", &l).unwrap().is_empty());
        let one = extract_radgraph_stub("there is an opacity.", &l).unwrap();
        assert_eq!(one.entities().len(), 1);
        assert!(one.relations().is_empty());
        assert!(extract_radgraph_stub("x", &Lexicon::default()).is_err());
    }

    #[test]
    fn stub_longest_match_and_adjacent_relation() {
        let a = extract_radgraph_stub("Right upper lobe opacity.", &lex()).unwrap();
        let ents: Vec<_> = a.entities().iter().map(|e| e.text.as_str()).collect();
        assert_eq!(ents, ["opacity", "right upper lobe"]);
        assert_eq!(a.relations().len(), 1);
        let r = a.relations().iter().next().unwrap();
        assert_eq!((r.head.text.as_str(), r.tail.text.as_str(), r.label.as_str()), ("opacity", "right upper lobe", "located_at"));
    }

    #[test]
    fn stub_window_limits_relations() {
        let far = extract_radgraph_stub("opacity is seen today near the pleural space", &lex()).unwrap();
        assert_eq!(far.entities().len(), 2);
        assert!(far.relations().is_empty());
        let wide = extract_radgraph_stub("opacity is seen today near the pleural space", &lex().with_window(5)).unwrap();
        assert_eq!(wide.relations().len(), 1);
    }
}
