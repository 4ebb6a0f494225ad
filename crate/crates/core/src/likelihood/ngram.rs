//! Add-k smoothed n-gram language model over whitespace tokens.

use std::collections::{BTreeMap, HashMap};

use crate::error::{OodError, Result};

pub const UNK: &str = "<unk>";

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NGramParams {
    pub order: usize,
    pub k: f64,
}

impl Default for NGramParams {
    fn default() -> Self {
        Self { order: 2, k: 1.0 }
    }
}

/// Conditional probabilities `P(w | previous order-1 tokens)` over the
/// training vocabulary plus an unknown-token symbol. Sentence starts are
/// padded with a boundary symbol that is never predicted.
#[derive(Debug, Clone)]
pub struct NGramLM {
    order: usize,
    k: f64,
    /// Token → (index, training frequency), ordered by token.
    vocab: BTreeMap<String, (u32, u64)>,
    context_totals: HashMap<Vec<u32>, u64>,
    counts: HashMap<(Vec<u32>, u32), u64>,
}

impl NGramLM {
    pub fn train(corpus: &[Vec<String>], params: NGramParams) -> Result<Self> {
        if params.order < 1 {
            return Err(OodError::invalid("n-gram order must be at least 1"));
        }
        if !(params.k > 0.0 && params.k.is_finite()) {
            return Err(OodError::invalid("smoothing constant k must be positive"));
        }
        let mut freq: BTreeMap<String, u64> = BTreeMap::new();
        for tok in corpus.iter().flatten() {
            *freq.entry(tok.clone()).or_insert(0) += 1;
        }
        if freq.is_empty() {
            return Err(OodError::invalid("cannot train a language model on an empty corpus"));
        }
        let vocab: BTreeMap<String, (u32, u64)> = freq
            .into_iter()
            .enumerate()
            .map(|(i, (t, f))| (t, (i as u32, f)))
            .collect();
        let mut lm = Self {
            order: params.order,
            k: params.k,
            vocab,
            context_totals: HashMap::new(),
            counts: HashMap::new(),
        };
        for sentence in corpus {
            let ids = lm.encode(sentence);
            for i in 0..ids.len() {
                let ctx = lm.context(&ids, i);
                *lm.context_totals.entry(ctx.clone()).or_insert(0) += 1;
                *lm.counts.entry((ctx, ids[i])).or_insert(0) += 1;
            }
        }
        Ok(lm)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Size of the prediction support: vocabulary plus the unknown symbol.
    pub fn support_size(&self) -> usize {
        self.vocab.len() + 1
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Training frequency of each vocabulary token, ordered by token.
    pub fn frequencies(&self) -> impl Iterator<Item = (&str, u64)> {
        self.vocab.iter().map(|(t, &(_, f))| (t.as_str(), f))
    }

    fn unk_id(&self) -> u32 {
        self.vocab.len() as u32
    }

    fn boundary_id(&self) -> u32 {
        self.vocab.len() as u32 + 1
    }

    fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens
            .iter()
            .map(|t| self.vocab.get(t.as_ref()).map_or(self.unk_id(), |&(i, _)| i))
            .collect()
    }

    fn context(&self, ids: &[u32], pos: usize) -> Vec<u32> {
        let width = self.order - 1;
        (0..width)
            .map(|j| {
                let back = width - j;
                if pos >= back {
                    ids[pos - back]
                } else {
                    self.boundary_id()
                }
            })
            .collect()
    }

    fn prob_ids(&self, ctx: &[u32], word: u32) -> f64 {
        let total = self.context_totals.get(ctx).copied().unwrap_or(0) as f64;
        let count = self
            .counts
            .get(&(ctx.to_vec(), word))
            .copied()
            .unwrap_or(0) as f64;
        (count + self.k) / (total + self.k * self.support_size() as f64)
    }

    /// `P(word | context)`; `context` holds the preceding tokens (only the
    /// last `order - 1` matter, missing positions count as sentence start).
    pub fn prob<S: AsRef<str>>(&self, context: &[S], word: &str) -> f64 {
        let mut toks: Vec<&str> = context.iter().map(|s| s.as_ref()).collect();
        toks.push(word);
        let ids = self.encode(&toks);
        let pos = ids.len() - 1;
        self.prob_ids(&self.context(&ids, pos), ids[pos])
    }

    /// Every token of the prediction support, `UNK` last.
    pub fn support(&self) -> Vec<&str> {
        self.vocab.keys().map(String::as_str).chain([UNK]).collect()
    }

    /// Natural-log probability of each token given its history.
    pub fn logprobs<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        let ids = self.encode(tokens);
        (0..ids.len())
            .map(|i| self.prob_ids(&self.context(&ids, i), ids[i]).ln())
            .collect()
    }
}

/// Log-probabilities of a uniform model over `support_size` symbols.
pub fn uniform_logprobs(len: usize, support_size: usize) -> Vec<f64> {
    vec![-(support_size as f64).ln(); len]
}
