use std::collections::HashMap;

use sha2::{Digest, Sha256};

use super::{Corpus, CorpusError};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const BOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";

pub const RESERVED: [&str; 4] = [PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, EOS_TOKEN];

/// Shared source/target vocabulary. Ids 0..4 are reserved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    id_of: HashMap<String, usize>,
    token_of: Vec<String>,
}

impl Vocabulary {
    /// Builds from an ordered list of non-reserved tokens; ids start at 4.
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        let mut token_of: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut id_of: HashMap<String, usize> =
            token_of.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        for t in tokens {
            if !id_of.contains_key(&t) {
                id_of.insert(t.clone(), token_of.len());
                token_of.push(t);
            }
        }
        Self { id_of, token_of }
    }

    /// Every token counted over complex sentences and all reference
    /// sentences; ids by descending count, ties lexicographic.
    pub fn build(corpus: &Corpus, min_count: usize) -> Result<Self, CorpusError> {
        if corpus.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let min_count = min_count.max(1);
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for e in &corpus.entries {
            for t in e.complex.iter().chain(e.simple_sentences().flatten()) {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(t, c)| c >= min_count && !RESERVED.contains(&t))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Ok(Self::from_tokens(kept.into_iter().map(|(t, _)| t.to_string())))
    }

    pub fn len(&self) -> usize {
        self.token_of.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.id_of.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.token_of.get(id).map(String::as_str)
    }

    /// Non-reserved tokens in id order.
    pub fn tokens(&self) -> &[String] {
        &self.token_of[RESERVED.len()..]
    }

    /// Hex SHA-256 over the id-ordered token list.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.token_of {
            h.update(t.as_bytes());
            h.update(*b"\n");
        }
        hex::encode(h.finalize())
    }
}

/// Per-example extension of the vocabulary with source-only words.
/// Extended ids start at the vocabulary size.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExtensionMap {
    base: usize,
    words: Vec<String>,
}

impl ExtensionMap {
    pub fn new(vocab: &Vocabulary, source: &[String]) -> Self {
        let mut words: Vec<String> = Vec::new();
        for t in source {
            if vocab.id(t).is_none() && !words.contains(t) {
                words.push(t.clone());
            }
        }
        Self {
            base: vocab.len(),
            words,
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.words.iter().position(|w| w == token).map(|p| self.base + p)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        id.checked_sub(self.base)
            .and_then(|i| self.words.get(i))
            .map(String::as_str)
    }
}

/// Maps tokens to ids. Out-of-vocabulary tokens found in `source` receive
/// extended ids in order of first source occurrence; the rest become UNK.
pub fn numericalize(
    tokens: &[String],
    vocab: &Vocabulary,
    source: Option<&[String]>,
) -> (Vec<usize>, ExtensionMap) {
    let ext = match source {
        Some(src) => ExtensionMap::new(vocab, src),
        None => ExtensionMap {
            base: vocab.len(),
            words: Vec::new(),
        },
    };
    let ids = tokens
        .iter()
        .map(|t| vocab.id(t).or_else(|| ext.id(t)).unwrap_or(UNK))
        .collect();
    (ids, ext)
}

pub fn detokenize(ids: &[usize], vocab: &Vocabulary, ext: &ExtensionMap) -> Vec<String> {
    ids.iter()
        .map(|&i| {
            vocab
                .token(i)
                .or_else(|| ext.token(i))
                .unwrap_or(UNK_TOKEN)
                .to_string()
        })
        .collect()
}
