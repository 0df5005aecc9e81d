//! Split-and-rephrase corpora: entries, JSONL I/O, tokenization and vocabularies.

mod io;
mod tokenize;
mod vocab;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{parse_corpus, parse_corpus_str, write_corpus, write_corpus_string};
pub use tokenize::{is_terminator, join, split_sentences, tokenize};
pub use vocab::{
    detokenize, numericalize, ExtensionMap, Vocabulary, BOS, BOS_TOKEN, EOS, EOS_TOKEN, PAD,
    PAD_TOKEN, RESERVED, UNK, UNK_TOKEN,
};

pub type Tokens = Vec<String>;

/// A reference decomposition: the simple sentences `T_1 .. T_n`.
pub type Decomposition = Vec<Tokens>;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed record at line {line}{}: {reason}", column.map(|c| format!(", column {c}")).unwrap_or_default())]
    MalformedRecord {
        line: usize,
        column: Option<usize>,
        reason: String,
    },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CorpusError {
    pub fn line(&self) -> Option<usize> {
        match self {
            CorpusError::MalformedRecord { line, .. } => Some(*line),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RdfTriple {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

impl RdfTriple {
    /// Trims the three fields; `None` if any of them ends up empty.
    pub fn new(subject: &str, relation: &str, object: &str) -> Option<Self> {
        let (s, r, o) = (subject.trim(), relation.trim(), object.trim());
        if s.is_empty() || r.is_empty() || o.is_empty() {
            return None;
        }
        Some(Self {
            subject: s.to_string(),
            relation: r.to_string(),
            object: o.to_string(),
        })
    }
}

impl fmt::Display for RdfTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} | {} | {})", self.subject, self.relation, self.object)
    }
}

/// One complex sentence with all of its reference decompositions and the
/// triples describing it.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub complex: Tokens,
    pub references: Vec<Decomposition>,
    pub triples: Vec<RdfTriple>,
}

impl Entry {
    /// Each reference decomposition flattened into one token stream.
    pub fn joined_references(&self) -> Vec<Tokens> {
        self.references.iter().map(|d| d.concat()).collect()
    }

    pub fn simple_sentences(&self) -> impl Iterator<Item = &Tokens> {
        self.references.iter().flatten()
    }

    fn merge(&mut self, other: Entry) {
        for r in other.references {
            if !self.references.contains(&r) {
                self.references.push(r);
            }
        }
        for t in other.triples {
            if !self.triples.contains(&t) {
                self.triples.push(t);
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub entries: Vec<Entry>,
    pub provenance: String,
}

impl Corpus {
    /// Builds a corpus, merging entries that share a complex sentence.
    pub fn from_entries(entries: impl IntoIterator<Item = Entry>, provenance: impl Into<String>) -> Self {
        let mut index: HashMap<Tokens, usize> = HashMap::new();
        let mut merged: Vec<Entry> = Vec::new();
        for e in entries {
            match index.get(&e.complex) {
                Some(&i) => merged[i].merge(e),
                None => {
                    index.insert(e.complex.clone(), merged.len());
                    merged.push(e);
                }
            }
        }
        Self {
            entries: merged,
            provenance: provenance.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sub-corpus made of the given entry indices, in the given order.
    pub fn subset(&self, ids: &[usize], provenance: impl Into<String>) -> Corpus {
        Corpus {
            entries: ids.iter().map(|&i| self.entries[i].clone()).collect(),
            provenance: provenance.into(),
        }
    }

    /// Number of reference decompositions with fewer than two sentences.
    pub fn short_references(&self) -> usize {
        self.entries
            .iter()
            .flat_map(|e| &e.references)
            .filter(|r| r.len() < 2)
            .count()
    }

    /// Every (complex, reference) pair, the unit of training.
    pub fn instances(&self) -> impl Iterator<Item = (&Tokens, Tokens)> {
        self.entries
            .iter()
            .flat_map(|e| e.references.iter().map(move |r| (&e.complex, r.concat())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triple_fields_are_trimmed_and_required() {
        assert_eq!(
            RdfTriple::new(" A ", "rel", "B\t"),
            Some(RdfTriple {
                subject: "A".into(),
                relation: "rel".into(),
                object: "B".into()
            })
        );
        assert_eq!(RdfTriple::new("A", "  ", "B"), None);
    }

    #[test]
    fn duplicates_merge_with_union_of_references() {
        let e = |r: &str| Entry {
            complex: tokenize("A B ."),
            references: vec![vec![tokenize(r)]],
            triples: vec![RdfTriple::new("A", "r", "B").unwrap()],
        };
        let c = Corpus::from_entries([e("A ."), e("B ."), e("A .")], "test");
        assert_eq!(c.len(), 1);
        assert_eq!(c.entries[0].references.len(), 2);
        assert_eq!(c.entries[0].triples.len(), 1);
        assert_eq!(c.instances().count(), 2);
    }
}
