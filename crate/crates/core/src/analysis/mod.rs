//! Memorization and error analyses: verbatim overlap with the training
//! set, repeated-entity probes, a heuristic fact audit of predictions, and
//! attention heatmaps.

mod heatmap;

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{split_sentences, Corpus, Entry, Tokens};
use crate::par::Exec;
use crate::splitkit::Ratio;

pub use heatmap::{attention_heatmap, heatmap_svg, heatmap_tsv, HeatmapError};

/// Every simple sentence of every reference in `corpus`.
pub fn simple_sentence_set(corpus: &Corpus) -> HashSet<Tokens> {
    corpus
        .entries
        .iter()
        .flat_map(|e| e.simple_sentences().cloned())
        .collect()
}

/// Exact token-sequence membership of each sentence in `train`.
pub fn verbatim_overlap(sentences: &[Tokens], train: &HashSet<Tokens>) -> Ratio {
    Ratio {
        hits: sentences.iter().filter(|s| train.contains(*s)).count(),
        total: sentences.len(),
    }
}

/// `entity` repeated `k` times.
pub fn make_probe(entity: &[String], k: usize) -> Tokens {
    assert!(!entity.is_empty() && k >= 1, "probe needs a non-empty entity and k >= 1");
    entity.iter().cycle().take(entity.len() * k).cloned().collect()
}

fn contains_seq(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

fn entity_tokens(s: &str) -> Tokens {
    s.split_whitespace().map(String::from).collect()
}

/// Triple subjects and objects, as token sequences.
#[derive(Debug, Clone, Default)]
pub struct EntityLexicon {
    entities: BTreeSet<Tokens>,
}

impl EntityLexicon {
    pub fn from_corpora<'a>(corpora: impl IntoIterator<Item = &'a Corpus>) -> Self {
        let mut entities = BTreeSet::new();
        for c in corpora {
            for t in c.entries.iter().flat_map(|e| &e.triples) {
                entities.insert(entity_tokens(&t.subject));
                entities.insert(entity_tokens(&t.object));
            }
        }
        entities.remove(&Tokens::new());
        Self { entities }
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    Supported,
    Unsupported,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceAudit {
    pub sentence: Tokens,
    pub verbatim_in_train: bool,
    /// Exact duplicate of an earlier sentence of the same prediction.
    pub repeated: bool,
    pub support: Support,
}

/// Heuristic stand-in for a manual fact audit. `supported` and `unknown`
/// are not judgements of correctness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionAudit {
    pub sentences: Vec<SentenceAudit>,
    /// Entry triples whose subject and object never appear together in one sentence.
    pub missing: usize,
}

impl PredictionAudit {
    pub fn count(&self, f: impl Fn(&SentenceAudit) -> bool) -> usize {
        self.sentences.iter().filter(|s| f(s)).count()
    }
}

fn is_content(tok: &str) -> bool {
    tok.chars().next().is_some_and(|c| c.is_uppercase() || c.is_ascii_digit())
}

/// Splits `prediction` into sentences and labels each one.
///
/// A sentence is `unsupported` when it mentions a lexicon entity that does
/// not occur in the complex sentence, `supported` when every capitalized or
/// numeric token occurs in the complex sentence, and `unknown` otherwise.
pub fn classify_prediction(
    prediction: &[String],
    entry: &Entry,
    train_simples: &HashSet<Tokens>,
    lexicon: &EntityLexicon,
) -> PredictionAudit {
    let complex: HashSet<&str> = entry.complex.iter().map(String::as_str).collect();
    let mut seen: HashSet<&[String]> = HashSet::new();
    let parts = split_sentences(prediction);
    let sentences = parts
        .iter()
        .map(|s| {
            let repeated = !seen.insert(s.as_slice());
            let foreign = lexicon
                .entities
                .iter()
                .any(|e| contains_seq(s, e) && !contains_seq(&entry.complex, e));
            let support = if foreign {
                Support::Unsupported
            } else if s.iter().filter(|t| is_content(t)).all(|t| complex.contains(t.as_str())) {
                Support::Supported
            } else {
                Support::Unknown
            };
            SentenceAudit {
                sentence: s.clone(),
                verbatim_in_train: train_simples.contains(s),
                repeated,
                support,
            }
        })
        .collect();
    let missing = entry
        .triples
        .iter()
        .filter(|t| {
            let (subj, obj) = (entity_tokens(&t.subject), entity_tokens(&t.object));
            !parts.iter().any(|s| contains_seq(s, &subj) && contains_seq(s, &obj))
        })
        .count();
    PredictionAudit { sentences, missing }
}

/// Corpus-level totals over audited predictions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub predictions: usize,
    pub sentences: usize,
    pub unsupported: usize,
    pub repeated: usize,
    /// Supported and not repeated: an optimistic heuristic.
    pub correct: usize,
    pub unknown: usize,
    pub missing: usize,
    pub verbatim_in_train: Ratio,
}

impl AuditSummary {
    pub fn from_audits(audits: &[PredictionAudit]) -> Self {
        let mut s = AuditSummary {
            predictions: audits.len(),
            ..Default::default()
        };
        for a in audits {
            s.sentences += a.sentences.len();
            s.unsupported += a.count(|x| x.support == Support::Unsupported);
            s.unknown += a.count(|x| x.support == Support::Unknown);
            s.repeated += a.count(|x| x.repeated);
            s.correct += a.count(|x| x.support == Support::Supported && !x.repeated);
            s.missing += a.missing;
            s.verbatim_in_train.hits += a.count(|x| x.verbatim_in_train);
        }
        s.verbatim_in_train.total = s.sentences;
        s
    }

    pub fn to_table(&self) -> String {
        format!(
            "{:>8} {:>8} {:>8} {:>8} {:>8}\n{:>8} {:>8} {:>8} {:>8} {:>8}\n\npredictions: {}  sentences: {}  verbatim in train: {}\n",
            "unsup.", "repeated", "correct", "missing", "unknown",
            self.unsupported, self.repeated, self.correct, self.missing, self.unknown,
            self.predictions, self.sentences, self.verbatim_in_train,
        )
    }
}

/// Audits every prediction against its entry, in parallel, preserving order.
pub fn audit_predictions(
    exec: Exec,
    predictions: &[Tokens],
    entries: &[Entry],
    train_simples: &HashSet<Tokens>,
    lexicon: &EntityLexicon,
) -> (Vec<PredictionAudit>, AuditSummary) {
    assert_eq!(predictions.len(), entries.len(), "one prediction per entry");
    let pairs: Vec<(&Tokens, &Entry)> = predictions.iter().zip(entries).collect();
    let audits = exec.map(&pairs, |(p, e)| classify_prediction(p, e, train_simples, lexicon));
    let summary = AuditSummary::from_audits(&audits);
    (audits, summary)
}
