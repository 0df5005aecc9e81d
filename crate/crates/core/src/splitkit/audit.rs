use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use super::{Ratio, Split, SplitAssignment};
use crate::corpus::{Corpus, RdfTriple};

#[derive(Debug, Clone, Serialize)]
pub struct RelationViolation {
    pub relation: String,
    /// Entries carrying the relation, none of them in TRAIN.
    pub entries: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TripleViolation {
    pub triple: RdfTriple,
    pub entries: Vec<(usize, Split)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub relation_constraint_passed: bool,
    pub relation_violations: Vec<RelationViolation>,
    pub triple_constraint_passed: bool,
    pub triple_violations: Vec<TripleViolation>,
    pub sizes: [usize; 3],
    pub fractions: [f64; 3],
    pub dev_relations_in_train: Ratio,
    pub test_relations_in_train: Ratio,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.relation_constraint_passed && self.triple_constraint_passed
    }

    pub fn to_text(&self) -> String {
        let mark = |ok: bool| if ok { "PASS" } else { "FAIL" };
        let mut s = String::new();
        let _ = writeln!(s, "{:<34}{}", "every relation in train", mark(self.relation_constraint_passed));
        for v in &self.relation_violations {
            let _ = writeln!(s, "  missing from train: {} (entries {:?})", v.relation, v.entries);
        }
        let _ = writeln!(s, "{:<34}{}", "every triple in one split", mark(self.triple_constraint_passed));
        for v in &self.triple_violations {
            let _ = writeln!(s, "  shared across splits: {} {:?}", v.triple, v.entries);
        }
        for sp in Split::ALL {
            let _ = writeln!(
                s,
                "{:<34}{} ({:.2}%)",
                format!("{sp} entries"),
                self.sizes[sp.index()],
                100.0 * self.fractions[sp.index()]
            );
        }
        let _ = writeln!(s, "{:<34}{}", "dev relations in train", self.dev_relations_in_train);
        let _ = writeln!(s, "{:<34}{}", "test relations in train", self.test_relations_in_train);
        s
    }
}

/// Exhaustive check of both split constraints on any assignment.
pub fn verify_split(corpus: &Corpus, a: &SplitAssignment) -> AuditReport {
    assert_eq!(corpus.len(), a.assignment.len(), "assignment must cover the corpus");
    let mut relation_entries: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut triple_entries: BTreeMap<&RdfTriple, Vec<usize>> = BTreeMap::new();
    for (i, e) in corpus.entries.iter().enumerate() {
        for t in &e.triples {
            let rel = relation_entries.entry(t.relation.as_str()).or_default();
            if rel.last() != Some(&i) {
                rel.push(i);
            }
            triple_entries.entry(t).or_default().push(i);
        }
    }

    let relation_violations: Vec<RelationViolation> = relation_entries
        .iter()
        .filter(|(_, ids)| ids.iter().all(|&i| a.assignment[i] != Split::Train))
        .map(|(r, ids)| RelationViolation {
            relation: r.to_string(),
            entries: ids.clone(),
        })
        .collect();

    let triple_violations: Vec<TripleViolation> = triple_entries
        .iter()
        .filter(|(_, ids)| ids.iter().any(|&i| a.assignment[i] != a.assignment[ids[0]]))
        .map(|(t, ids)| TripleViolation {
            triple: (*t).clone(),
            entries: ids.iter().map(|&i| (i, a.assignment[i])).collect(),
        })
        .collect();

    let relations_in = |split: Split| -> BTreeSet<&str> {
        corpus
            .entries
            .iter()
            .zip(&a.assignment)
            .filter(|(_, &s)| s == split)
            .flat_map(|(e, _)| e.triples.iter().map(|t| t.relation.as_str()))
            .collect()
    };
    let train = relations_in(Split::Train);
    let coverage = |split: Split| {
        let rels = relations_in(split);
        Ratio {
            hits: rels.iter().filter(|r| train.contains(*r)).count(),
            total: rels.len(),
        }
    };

    AuditReport {
        relation_constraint_passed: relation_violations.is_empty(),
        relation_violations,
        triple_constraint_passed: triple_violations.is_empty(),
        triple_violations,
        sizes: a.sizes(),
        fractions: a.fractions(),
        dev_relations_in_train: coverage(Split::Dev),
        test_relations_in_train: coverage(Split::Test),
    }
}
