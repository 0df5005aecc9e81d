use std::collections::HashMap;

use crate::corpus::{Corpus, RdfTriple};

/// Disjoint-set forest with path compression and union by size.
#[derive(Debug, Clone)]
pub struct DisjointSets {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSets {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut v: usize) -> usize {
        let mut root = v;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[v] != root {
            let next = self.parent[v];
            self.parent[v] = root;
            v = next;
        }
        root
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }

    /// Groups of members, each sorted ascending, ordered by smallest member.
    pub fn groups(&mut self) -> Vec<Vec<usize>> {
        let n = self.parent.len();
        let mut slot: HashMap<usize, usize> = HashMap::new();
        let mut out: Vec<Vec<usize>> = Vec::new();
        for v in 0..n {
            let r = self.find(v);
            let idx = *slot.entry(r).or_insert_with(|| {
                out.push(Vec::new());
                out.len() - 1
            });
            out[idx].push(v);
        }
        out
    }
}

/// Connected components of the entry–triple graph. Entries sharing a triple,
/// directly or through a chain, land in one component; triple-less entries
/// are singletons.
pub fn build_components(corpus: &Corpus) -> Vec<Vec<usize>> {
    let mut sets = DisjointSets::new(corpus.len());
    let mut first_seen: HashMap<&RdfTriple, usize> = HashMap::new();
    for (i, e) in corpus.entries.iter().enumerate() {
        for t in &e.triples {
            match first_seen.get(t) {
                Some(&j) => {
                    sets.union(i, j);
                }
                None => {
                    first_seen.insert(t, i);
                }
            }
        }
    }
    sets.groups()
}
