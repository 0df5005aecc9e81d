use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{build_components, Ratios, Split, SplitAssignment, SplitError};
use crate::corpus::Corpus;

/// Allocation stage that produced an infeasibility report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AllocStep {
    Greedy,
    RelationRepair,
    Rebalance,
}

struct Unit {
    members: Vec<usize>,
    relations: BTreeSet<String>,
}

struct State<'a> {
    units: &'a [Unit],
    split_of: Vec<Split>,
    sizes: [usize; 3],
    total: usize,
    targets: [f64; 3],
}

impl State<'_> {
    fn deficit(&self, s: Split) -> f64 {
        self.targets[s.index()] - self.sizes[s.index()] as f64
    }

    fn move_unit(&mut self, u: usize, to: Split) {
        let from = self.split_of[u];
        let n = self.units[u].members.len();
        self.sizes[from.index()] -= n;
        self.sizes[to.index()] += n;
        self.split_of[u] = to;
    }

    /// Sum of absolute deviations of split sizes from their targets.
    fn deviation(&self, sizes: &[usize; 3]) -> f64 {
        (0..3)
            .map(|i| (sizes[i] as f64 - self.targets[i]).abs())
            .sum()
    }

    fn train_relation_counts(&self) -> BTreeMap<&str, usize> {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for (u, unit) in self.units.iter().enumerate() {
            if self.split_of[u] == Split::Train {
                for r in &unit.relations {
                    *counts.entry(r.as_str()).or_default() += 1;
                }
            }
        }
        counts
    }
}

/// Randomly divides the corpus into train/dev/test by whole components.
///
/// Greedy largest-first placement into the split with the largest remaining
/// deficit, then a repair pass pulling the smallest component carrying each
/// train-missing relation into TRAIN, then rebalancing out of an oversized
/// TRAIN with moves that keep every relation represented.
pub fn allocate_splits(corpus: &Corpus, ratios: Ratios, seed: u64) -> Result<SplitAssignment, SplitError> {
    ratios.validate()?;
    if corpus.is_empty() {
        return Err(SplitError::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut comps = build_components(corpus);
    comps.shuffle(&mut rng);
    // stable: equal sizes keep their shuffled order
    comps.sort_by_key(|c| std::cmp::Reverse(c.len()));
    let units: Vec<Unit> = comps
        .into_iter()
        .map(|members| {
            let relations = members
                .iter()
                .flat_map(|&i| corpus.entries[i].triples.iter().map(|t| t.relation.clone()))
                .collect();
            Unit { members, relations }
        })
        .collect();

    let total = corpus.len();
    let mut state = State {
        units: &units,
        split_of: vec![Split::Train; units.len()],
        sizes: [0; 3],
        total,
        targets: ratios.0.map(|r| r * total as f64),
    };

    // 1-2. greedy by deficit
    for u in 0..units.len() {
        let best = Split::ALL
            .into_iter()
            .fold(Split::Train, |best, s| if state.deficit(s) > state.deficit(best) { s } else { best });
        state.split_of[u] = best;
        state.sizes[best.index()] += units[u].members.len();
    }

    // 3. relation repair
    let all_relations: BTreeSet<&str> = units
        .iter()
        .flat_map(|u| u.relations.iter().map(String::as_str))
        .collect();
    let mut emptied_by: [Option<String>; 3] = [None, None, None];
    for rel in &all_relations {
        let carriers: Vec<usize> = (0..units.len())
            .filter(|&u| units[u].relations.contains(*rel))
            .collect();
        if carriers.iter().any(|&u| state.split_of[u] == Split::Train) {
            continue;
        }
        let pick = carriers
            .iter()
            .copied()
            .min_by_key(|&u| (units[u].members.len(), u))
            .expect("relation occurs in at least one unit");
        let from = state.split_of[pick];
        state.move_unit(pick, Split::Train);
        if state.sizes[from.index()] == 0 {
            emptied_by[from.index()] = Some(rel.to_string());
        }
    }

    // 4. rebalance an oversized TRAIN
    loop {
        if state.sizes[Split::Train.index()] as f64 <= state.targets[0] {
            break;
        }
        let counts = state.train_relation_counts();
        let dest = if state.deficit(Split::Dev) >= state.deficit(Split::Test) {
            Split::Dev
        } else {
            Split::Test
        };
        let current = state.deviation(&state.sizes);
        let mut best: Option<usize> = None;
        for u in 0..units.len() {
            if state.split_of[u] != Split::Train {
                continue;
            }
            if units[u].relations.iter().any(|r| counts[r.as_str()] < 2) {
                continue;
            }
            let n = units[u].members.len();
            let mut sizes = state.sizes;
            sizes[0] -= n;
            sizes[dest.index()] += n;
            if state.deviation(&sizes) + 1e-9 < current
                && best.is_none_or(|b| n > units[b].members.len())
            {
                best = Some(u);
            }
        }
        match best {
            Some(u) => state.move_unit(u, dest),
            None => break,
        }
    }

    for s in [Split::Dev, Split::Test] {
        if state.sizes[s.index()] == 0 {
            let relation = emptied_by[s.index()].take();
            let step = if relation.is_some() {
                AllocStep::RelationRepair
            } else {
                AllocStep::Rebalance
            };
            return Err(SplitError::Infeasible {
                step,
                relation,
                detail: format!(
                    "{s} split is empty ({} of {} entries in train)",
                    state.sizes[0], state.total
                ),
            });
        }
    }

    let mut assignment = vec![Split::Train; total];
    for (u, unit) in units.iter().enumerate() {
        for &m in &unit.members {
            assignment[m] = state.split_of[u];
        }
    }
    Ok(SplitAssignment {
        assignment,
        seed,
        ratios,
    })
}

/// Shuffles distinct complex sentences and cuts them by ratio, ignoring the
/// triples entirely. This is the leakage-prone regime the constrained
/// allocator exists to avoid.
pub fn naive_split(corpus: &Corpus, ratios: Ratios, seed: u64) -> Result<SplitAssignment, SplitError> {
    ratios.validate()?;
    if corpus.is_empty() {
        return Err(SplitError::EmptyCorpus);
    }
    let n = corpus.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (ratios.0[0] * n as f64).round() as usize;
    let n_dev = ((ratios.0[1] * n as f64).round() as usize).min(n - n_train);
    let mut assignment = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        assignment[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_dev {
            Split::Dev
        } else {
            Split::Test
        };
    }
    Ok(SplitAssignment {
        assignment,
        seed,
        ratios,
    })
}
