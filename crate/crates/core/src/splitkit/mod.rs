//! Train/dev/test splitting under two fact constraints, plus the audit and
//! leakage statistics used to check any assignment.
//!
//! * Constraint R: every relation that occurs in the corpus occurs in TRAIN.
//! * Constraint T: no triple occurs in two different splits.
//!
//! The unit of assignment is a connected component of the entry–triple
//! graph, which makes constraint T hold by construction.

mod allocate;
mod audit;
mod components;
mod stats;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;

pub use allocate::{allocate_splits, naive_split, AllocStep};
pub use audit::{verify_split, AuditReport, RelationViolation, TripleViolation};
pub use components::{build_components, DisjointSets};
pub use stats::{split_stats, SplitCounts, SplitStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// Target fractions for train/dev/test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratios(pub [f64; 3]);

impl Default for Ratios {
    fn default() -> Self {
        Ratios([0.8, 0.1, 0.1])
    }
}

impl Ratios {
    pub fn new(train: f64, dev: f64, test: f64) -> Result<Self, SplitError> {
        let r = Ratios([train, dev, test]);
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), SplitError> {
        let sum: f64 = self.0.iter().sum();
        if self.0.iter().any(|&x| !(x > 0.0) || !x.is_finite()) || (sum - 1.0).abs() > 1e-9 {
            return Err(SplitError::InvalidRatios(self.0));
        }
        Ok(())
    }

    pub fn get(&self, s: Split) -> f64 {
        self.0[s.index()]
    }
}

impl FromStr for Ratios {
    type Err = SplitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| SplitError::InvalidRatios([f64::NAN; 3]))?;
        match parts.as_slice() {
            [a, b, c] => Ratios::new(*a, *b, *c),
            _ => Err(SplitError::InvalidRatios([f64::NAN; 3])),
        }
    }
}

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("ratios must be three positive fractions summing to 1, got {0:?}")]
    InvalidRatios([f64; 3]),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("infeasible split ({step:?}){}: {detail}", relation.as_ref().map(|r| format!(", relation `{r}`")).unwrap_or_default())]
    Infeasible {
        step: AllocStep,
        relation: Option<String>,
        detail: String,
    },
    #[error("assignment line {line}: {reason}")]
    BadAssignment { line: usize, reason: String },
}

/// Split membership for every entry of a corpus, indexed by entry id.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub assignment: Vec<Split>,
    pub seed: u64,
    pub ratios: Ratios,
}

impl SplitAssignment {
    pub fn ids(&self, split: Split) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn sizes(&self) -> [usize; 3] {
        let mut out = [0; 3];
        for s in &self.assignment {
            out[s.index()] += 1;
        }
        out
    }

    pub fn fractions(&self) -> [f64; 3] {
        let n = self.assignment.len().max(1) as f64;
        self.sizes().map(|c| c as f64 / n)
    }

    pub fn subcorpus(&self, corpus: &Corpus, split: Split) -> Corpus {
        corpus.subset(&self.ids(split), format!("{} [{split}]", corpus.provenance))
    }

    /// One `{"complex": ..., "split": ...}` line per entry.
    pub fn to_jsonl(&self, corpus: &Corpus) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            complex: String,
            split: &'a str,
        }
        let mut out = String::new();
        for (e, s) in corpus.entries.iter().zip(&self.assignment) {
            let line = Line {
                complex: e.complex.join(" "),
                split: s.name(),
            };
            out.push_str(&serde_json::to_string(&line).expect("assignment line serializes"));
            out.push('\n');
        }
        out
    }

    /// Reads an external assignment. Every corpus entry must be covered;
    /// lines naming unknown complex sentences are errors.
    pub fn from_jsonl(text: &str, corpus: &Corpus) -> Result<Self, SplitError> {
        #[derive(Deserialize)]
        struct Line {
            complex: String,
            split: String,
        }
        let index: HashMap<String, usize> = corpus
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.complex.join(" "), i))
            .collect();
        let mut slots: Vec<Option<Split>> = vec![None; corpus.len()];
        for (n, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let bad = |reason: String| SplitError::BadAssignment { line: n + 1, reason };
            let line: Line = serde_json::from_str(raw).map_err(|e| bad(e.to_string()))?;
            let key = crate::corpus::tokenize(&line.complex).join(" ");
            let id = *index
                .get(&key)
                .ok_or_else(|| bad(format!("complex sentence not in corpus: {}", line.complex)))?;
            slots[id] = Some(line.split.parse().map_err(bad)?);
        }
        let assignment = slots
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                s.ok_or_else(|| SplitError::BadAssignment {
                    line: 0,
                    reason: format!("entry {i} has no assignment"),
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            assignment,
            seed: 0,
            ratios: Ratios::default(),
        })
    }
}

/// `hits/total (pct%)`, with the percentage undefined on an empty total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub hits: usize,
    pub total: usize,
}

impl Ratio {
    pub fn percent(&self) -> Option<f64> {
        (self.total > 0).then(|| 100.0 * self.hits as f64 / self.total as f64)
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.percent() {
            Some(p) => write!(f, "{}/{} ({:.2}%)", self.hits, self.total, p),
            None => write!(f, "{}/{} (n/a)", self.hits, self.total),
        }
    }
}
