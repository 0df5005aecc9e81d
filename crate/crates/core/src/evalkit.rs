//! Evaluation protocol: per-prediction multi-reference BLEU averaged over the
//! test set, simple sentences per complex sentence, tokens per simple sentence.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{split_sentences, Tokens};
use crate::par::Exec;

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{predictions} predictions but {references} reference sets")]
    LengthMismatch { predictions: usize, references: usize },
    #[error("nothing to evaluate")]
    Empty,
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    m
}

/// Reference length closest to `cand_len`; equidistant lengths resolve to the shorter.
pub fn closest_ref_len<S>(cand_len: usize, references: &[Vec<S>]) -> usize {
    references
        .iter()
        .map(Vec::len)
        .min_by_key(|&l| (l.abs_diff(cand_len), l))
        .unwrap_or(0)
}

/// Unsmoothed sentence BLEU against several references, on a 0..100 scale.
///
/// N-gram counts are clipped by their maximum count in any single reference;
/// the brevity penalty uses the closest reference length. Any zero n-gram
/// precision yields 0.
pub fn sentence_bleu_multi_ref<S: AsRef<str>>(candidate: &[S], references: &[Vec<S>], max_order: usize) -> f64 {
    if candidate.is_empty() || references.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_order {
        let cand = ngram_counts(candidate, n);
        let total: usize = cand.values().sum();
        if total == 0 {
            return 0.0;
        }
        let mut max_ref: HashMap<Vec<&str>, usize> = HashMap::new();
        for r in references {
            for (g, c) in ngram_counts(r, n) {
                let slot = max_ref.entry(g).or_insert(0);
                *slot = (*slot).max(c);
            }
        }
        let matched: usize = cand
            .iter()
            .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        if matched == 0 {
            return 0.0;
        }
        log_sum += (matched as f64 / total as f64).ln();
    }
    let c = candidate.len() as f64;
    let r = closest_ref_len(candidate.len(), references) as f64;
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    100.0 * bp * (log_sum / max_order as f64).exp()
}

pub fn averaged_individual_bleu(predictions: &[Tokens], reference_sets: &[Vec<Tokens>]) -> Result<f64, EvalError> {
    averaged_individual_bleu_with(Exec::default(), predictions, reference_sets)
}

/// Mean of per-prediction multi-reference BLEU. Each reference set holds
/// every decomposition of the complex sentence, flattened to one stream.
pub fn averaged_individual_bleu_with(
    exec: Exec,
    predictions: &[Tokens],
    reference_sets: &[Vec<Tokens>],
) -> Result<f64, EvalError> {
    let scores = per_sentence_bleu(exec, predictions, reference_sets)?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

pub fn per_sentence_bleu(exec: Exec, predictions: &[Tokens], reference_sets: &[Vec<Tokens>]) -> Result<Vec<f64>, EvalError> {
    if predictions.len() != reference_sets.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            references: reference_sets.len(),
        });
    }
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    let pairs: Vec<(&Tokens, &Vec<Tokens>)> = predictions.iter().zip(reference_sets).collect();
    Ok(exec.map(&pairs, |(p, r)| sentence_bleu_multi_ref(p, r, MAX_ORDER)))
}

/// Mean number of sentences per prediction.
pub fn sents_per_prediction(predictions: &[Tokens]) -> Result<f64, EvalError> {
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    let total: usize = predictions.iter().map(|p| split_sentences(p).len()).sum();
    Ok(total as f64 / predictions.len() as f64)
}

/// Macro average: per complex sentence, the mean decomposition length over
/// its references; then the mean of those means.
pub fn sents_per_complex_macro(reference_sets: &[Vec<Vec<Tokens>>]) -> Result<f64, EvalError> {
    let per: Vec<f64> = reference_sets
        .iter()
        .filter(|refs| !refs.is_empty())
        .map(|refs| refs.iter().map(|d| d.len() as f64).sum::<f64>() / refs.len() as f64)
        .collect();
    if per.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// Mean token count over every sentence of every prediction.
pub fn tokens_per_simple(predictions: &[Tokens]) -> Result<f64, EvalError> {
    let lens: Vec<usize> = predictions
        .iter()
        .flat_map(|p| split_sentences(p))
        .map(|s| s.len())
        .collect();
    if lens.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(lens.iter().sum::<usize>() as f64 / lens.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub avg_bleu: f64,
    pub macro_sents_per_complex: f64,
    pub mean_tokens_per_simple: f64,
    pub n_predictions: usize,
}

impl EvalReport {
    /// BLEU over `predictions` against flattened references, with #S/C taken
    /// over the predictions.
    pub fn compute(exec: Exec, predictions: &[Tokens], reference_sets: &[Vec<Tokens>]) -> Result<Self, EvalError> {
        Ok(Self {
            avg_bleu: averaged_individual_bleu_with(exec, predictions, reference_sets)?,
            macro_sents_per_complex: sents_per_prediction(predictions)?,
            mean_tokens_per_simple: tokens_per_simple(predictions).unwrap_or(0.0),
            n_predictions: predictions.len(),
        })
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:>8}  {:>6}  {:>6}", "BLEU", "#S/C", "#T/S");
        let _ = writeln!(
            s,
            "{:>8.2}  {:>6.2}  {:>6.2}",
            self.avg_bleu, self.macro_sents_per_complex, self.mean_tokens_per_simple
        );
        s
    }
}
