//! Seeded synthetic split-and-rephrase corpora.
//!
//! Each subject entity carries [`FACTS_PER_ENTITY`] facts with fresh
//! objects, so an entity's entries form exactly one triple-sharing
//! component. Relations are dealt to facts cyclically; with
//! `per_relation = K` every relation lands in at least `K` distinct
//! components. Every 2- and 3-fact subset of an entity's facts becomes one
//! entry:
//!
//! ```text
//! complex:   Bora Kelun works for Tavimo , lives near Sorel and owns Quib .
//! reference: Bora Kelun works for Tavimo . Bora Kelun lives near Sorel . Bora Kelun owns Quib .
//! ```

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Entry, RdfTriple, Tokens};

pub const FACTS_PER_ENTITY: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Minimum number of subject entities.
    pub entities: usize,
    pub relations: usize,
    /// Minimum number of components each relation appears in.
    pub per_relation: usize,
    /// References per entry, as distinct orderings of the simple sentences (1 to 6).
    pub references: usize,
    /// Facts per entry; each size k yields every k-subset of an entity's facts.
    pub fact_counts: Vec<usize>,
    /// Tokens per subject name.
    pub subject_tokens: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            entities: 50,
            relations: 12,
            per_relation: 3,
            references: 1,
            fact_counts: vec![2, 3],
            subject_tokens: 2,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Number of subject entities actually generated.
    pub fn num_entities(&self) -> usize {
        let needed = (self.relations * self.per_relation).div_ceil(FACTS_PER_ENTITY);
        let mut n = self.entities.max(needed);
        if self.relations < FACTS_PER_ENTITY {
            n = n.max(self.per_relation);
        }
        n.max(1)
    }

    pub fn entries_per_entity(&self) -> usize {
        fact_subsets(&self.fact_counts).len()
    }
}

const ONSETS: [&str; 16] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
const CODAS: [&str; 6] = ["", "n", "r", "l", "s", "m"];
const VERBS: [&str; 16] = [
    "works", "lives", "studied", "plays", "trades", "sails", "writes", "travels", "dines", "sings", "rests", "paints",
    "teaches", "hunts", "swims", "builds",
];
const PREPS: [&str; 10] = ["for", "near", "with", "at", "under", "beside", "behind", "about", "against", "beyond"];
const ADVERBS: [&str; 6] = ["often", "rarely", "mostly", "sometimes", "quietly", "gladly"];

/// Number of distinct relation phrases the generator can produce.
pub const MAX_RELATIONS: usize = VERBS.len() * PREPS.len() * (1 + ADVERBS.len());

fn syllable_word<R: Rng>(rng: &mut R, syllables: usize) -> String {
    let mut w = String::new();
    for k in 0..syllables {
        w.push_str(ONSETS.choose(rng).unwrap());
        w.push_str(VOWELS.choose(rng).unwrap());
        if k + 1 == syllables {
            w.push_str(CODAS.choose(rng).unwrap());
        }
    }
    let mut c = w.chars();
    let first = c.next().unwrap().to_ascii_uppercase();
    std::iter::once(first).chain(c).collect()
}

fn fresh<R: Rng>(rng: &mut R, used: &mut HashSet<String>, mut make: impl FnMut(&mut R) -> String) -> String {
    loop {
        let w = make(rng);
        if used.insert(w.clone()) {
            return w;
        }
    }
}

/// `n` distinct relation phrases, two words each while they last, then three.
fn relation_phrases<R: Rng>(rng: &mut R, n: usize) -> Vec<Tokens> {
    let mut two: Vec<Tokens> = VERBS
        .iter()
        .flat_map(|v| PREPS.iter().map(move |p| vec![v.to_string(), p.to_string()]))
        .collect();
    two.shuffle(rng);
    let mut three: Vec<Tokens> = VERBS
        .iter()
        .flat_map(|v| {
            ADVERBS
                .iter()
                .flat_map(move |a| PREPS.iter().map(move |p| vec![v.to_string(), a.to_string(), p.to_string()]))
        })
        .collect();
    three.shuffle(rng);
    assert!(n <= two.len() + three.len(), "at most {} relations", two.len() + three.len());
    two.into_iter().chain(three).take(n).collect()
}

struct Fact {
    relation: Tokens,
    object: String,
}

fn sentence(subject: &[String], fact: &Fact) -> Tokens {
    let mut t: Tokens = subject.to_vec();
    t.extend(fact.relation.iter().cloned());
    t.push(fact.object.clone());
    t.push(".".into());
    t
}

fn complex(subject: &[String], facts: &[&Fact]) -> Tokens {
    let mut t: Tokens = subject.to_vec();
    for (k, f) in facts.iter().enumerate() {
        if k > 0 {
            t.push(if k + 1 == facts.len() { "and" } else { "," }.to_string());
        }
        t.extend(f.relation.iter().cloned());
        t.push(f.object.clone());
    }
    t.push(".".into());
    t
}

/// Index subsets of an entity's facts, smaller sizes first.
fn fact_subsets(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut sizes: Vec<usize> = sizes.iter().copied().filter(|k| (2..=3).contains(k)).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let mut out = Vec::new();
    for k in sizes {
        if k == 2 {
            for a in 0..FACTS_PER_ENTITY {
                for b in a + 1..FACTS_PER_ENTITY {
                    out.push(vec![a, b]);
                }
            }
        } else {
            for skip in (0..FACTS_PER_ENTITY).rev() {
                out.push((0..FACTS_PER_ENTITY).filter(|&i| i != skip).collect());
            }
        }
    }
    out
}

fn orderings(n: usize) -> Vec<Vec<usize>> {
    match n {
        2 => vec![vec![0, 1], vec![1, 0]],
        _ => vec![
            vec![0, 1, 2],
            vec![1, 0, 2],
            vec![0, 2, 1],
            vec![2, 1, 0],
            vec![1, 2, 0],
            vec![2, 0, 1],
        ],
    }
}

pub fn generate(cfg: &SynthConfig) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let relations = relation_phrases(&mut rng, cfg.relations.max(1));
    let mut used = HashSet::new();
    let n_entities = cfg.num_entities();
    let mut entries = Vec::with_capacity(n_entities * cfg.entries_per_entity());
    let mut next_relation = 0;

    for _ in 0..n_entities {
        let subject: Tokens = (0..cfg.subject_tokens.max(1))
            .map(|_| fresh(&mut rng, &mut used, |r| syllable_word(r, 2)))
            .collect();
        let facts: Vec<Fact> = (0..FACTS_PER_ENTITY)
            .map(|_| {
                let relation = relations[next_relation % relations.len()].clone();
                next_relation += 1;
                let syl = rng.gen_range(2..=3);
                Fact {
                    relation,
                    object: fresh(&mut rng, &mut used, |r| syllable_word(r, syl)),
                }
            })
            .collect();
        let subject_name = subject.join(" ");
        for subset in fact_subsets(&cfg.fact_counts) {
            let chosen: Vec<&Fact> = subset.iter().map(|&k| &facts[k]).collect();
            let references = orderings(chosen.len())
                .into_iter()
                .take(cfg.references.max(1))
                .map(|order| order.iter().map(|&k| sentence(&subject, chosen[k])).collect())
                .collect();
            let triples = chosen
                .iter()
                .map(|f| RdfTriple::new(&subject_name, &f.relation.join("_"), &f.object).expect("non-empty fields"))
                .collect();
            entries.push(Entry {
                complex: complex(&subject, &chosen),
                references,
                triples,
            });
        }
    }
    Corpus::from_entries(entries, format!("synth(seed={})", cfg.seed))
}
