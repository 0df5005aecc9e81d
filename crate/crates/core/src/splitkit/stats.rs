use std::collections::HashSet;
use std::fmt::Write as _;

use serde::Serialize;

use super::{Ratio, Split, SplitAssignment};
use crate::corpus::{Corpus, Entry, Tokens};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SplitCounts {
    /// (complex, reference) pairs.
    pub complex_count: usize,
    pub complex_unique: usize,
    pub simple_count: usize,
    pub simple_unique: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeldOutStats {
    /// Every simple-sentence occurrence, checked against TRAIN simple sentences.
    pub simple_in_train: Ratio,
    /// Distinct simple sentences.
    pub simple_in_train_unique: Ratio,
    pub vocab_in_train: Ratio,
    pub entities_in_train: Ratio,
    pub relations_in_train: Ratio,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitStats {
    pub train: SplitCounts,
    pub dev: SplitCounts,
    pub test: SplitCounts,
    pub dev_vs_train: HeldOutStats,
    pub test_vs_train: HeldOutStats,
}

struct View<'a> {
    entries: Vec<&'a Entry>,
}

impl<'a> View<'a> {
    fn of(corpus: &'a Corpus, a: &SplitAssignment, split: Split) -> Self {
        Self {
            entries: corpus
                .entries
                .iter()
                .zip(&a.assignment)
                .filter(|(_, &s)| s == split)
                .map(|(e, _)| e)
                .collect(),
        }
    }

    fn simples(&self) -> impl Iterator<Item = &'a Tokens> + '_ {
        self.entries.iter().flat_map(|e| e.simple_sentences())
    }

    fn counts(&self) -> SplitCounts {
        let unique: HashSet<&Tokens> = self.simples().collect();
        SplitCounts {
            complex_count: self.entries.iter().map(|e| e.references.len()).sum(),
            complex_unique: self.entries.len(),
            simple_count: self.simples().count(),
            simple_unique: unique.len(),
        }
    }

    fn vocab(&self) -> HashSet<&'a str> {
        self.entries
            .iter()
            .flat_map(|e| e.complex.iter().chain(e.simple_sentences().flatten()))
            .map(String::as_str)
            .collect()
    }

    fn entities(&self) -> HashSet<&'a str> {
        self.entries
            .iter()
            .flat_map(|e| &e.triples)
            .flat_map(|t| [t.subject.as_str(), t.object.as_str()])
            .collect()
    }

    fn relations(&self) -> HashSet<&'a str> {
        self.entries
            .iter()
            .flat_map(|e| &e.triples)
            .map(|t| t.relation.as_str())
            .collect()
    }
}

fn coverage<T: Eq + std::hash::Hash>(held: &HashSet<T>, train: &HashSet<T>) -> Ratio {
    Ratio {
        hits: held.iter().filter(|x| train.contains(*x)).count(),
        total: held.len(),
    }
}

fn held_out(held: &View, train: &View, train_simples: &HashSet<&Tokens>) -> HeldOutStats {
    let occurrences: Vec<&Tokens> = held.simples().collect();
    let unique: HashSet<&Tokens> = occurrences.iter().copied().collect();
    HeldOutStats {
        simple_in_train: Ratio {
            hits: occurrences.iter().filter(|s| train_simples.contains(*s)).count(),
            total: occurrences.len(),
        },
        simple_in_train_unique: coverage(&unique, train_simples),
        vocab_in_train: coverage(&held.vocab(), &train.vocab()),
        entities_in_train: coverage(&held.entities(), &train.entities()),
        relations_in_train: coverage(&held.relations(), &train.relations()),
    }
}

/// Per-split size counts and dev/test leakage against TRAIN, by exact
/// token-sequence and exact string matching.
pub fn split_stats(corpus: &Corpus, a: &SplitAssignment) -> SplitStats {
    let train = View::of(corpus, a, Split::Train);
    let dev = View::of(corpus, a, Split::Dev);
    let test = View::of(corpus, a, Split::Test);
    let train_simples: HashSet<&Tokens> = train.simples().collect();
    SplitStats {
        train: train.counts(),
        dev: dev.counts(),
        test: test.counts(),
        dev_vs_train: held_out(&dev, &train, &train_simples),
        test_vs_train: held_out(&test, &train, &train_simples),
    }
}

impl SplitStats {
    /// Aligned two-column table: `count  unique` per split, then overlaps.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<28}| {:<12}| unique", "", "count");
        let _ = writeln!(s, "{}", "-".repeat(52));
        for (name, c) in [("train", &self.train), ("dev", &self.dev), ("test", &self.test)] {
            let _ = writeln!(s, "{:<28}| {:<12}| {}", format!("{name} complex sentences"), c.complex_count, c.complex_unique);
            let _ = writeln!(s, "{:<28}| {:<12}| {}", format!("{name} simple sentences"), c.simple_count, c.simple_unique);
        }
        let _ = writeln!(s, "{}", "-".repeat(52));
        for (name, h) in [("dev", &self.dev_vs_train), ("test", &self.test_vs_train)] {
            let _ = writeln!(s, "{:<28}| {:<12}| {}", format!("# {name} simple in train"), h.simple_in_train, h.simple_in_train_unique);
        }
        for (name, h) in [("dev", &self.dev_vs_train), ("test", &self.test_vs_train)] {
            let _ = writeln!(s, "{:<28}| {}", format!("% {name} vocab in train"), h.vocab_in_train);
        }
        let _ = writeln!(s, "{}", "-".repeat(52));
        for (name, h) in [("dev", &self.dev_vs_train), ("test", &self.test_vs_train)] {
            let _ = writeln!(s, "{:<28}| {}", format!("{name} entities in train"), h.entities_in_train);
        }
        for (name, h) in [("dev", &self.dev_vs_train), ("test", &self.test_vs_train)] {
            let _ = writeln!(s, "{:<28}| {}", format!("{name} relations in train"), h.relations_in_train);
        }
        s
    }
}
