//! Word-substitution noising of a corpus, used to build a background LM.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OodError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub p_noise: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            p_noise: 0.5,
            seed: 0,
        }
    }
}

/// Substitution distribution: each vocabulary word with mass proportional
/// to the square root of its corpus frequency. Ordered by token.
pub fn substitution_distribution(corpus: &[Vec<String>]) -> Vec<(String, f64)> {
    let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
    for t in corpus.iter().flatten() {
        *freq.entry(t.as_str()).or_insert(0) += 1;
    }
    let norm: f64 = freq.values().map(|&f| (f as f64).sqrt()).sum();
    freq.into_iter()
        .map(|(t, f)| (t.to_string(), (f as f64).sqrt() / norm))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyCorpus {
    pub sentences: Vec<Vec<String>>,
    /// Number of positions selected for substitution.
    pub substitutions: usize,
    pub total_tokens: usize,
    /// How often each word was drawn as a replacement.
    pub replacement_counts: BTreeMap<String, usize>,
}

impl NoisyCorpus {
    pub fn substitution_rate(&self) -> f64 {
        self.substitutions as f64 / self.total_tokens as f64
    }
}

/// Replaces each token independently with probability `p_noise` by a word
/// drawn from [`substitution_distribution`]. Sentence lengths are preserved.
pub fn make_noisy_corpus(corpus: &[Vec<String>], cfg: &NoiseConfig) -> Result<NoisyCorpus> {
    if !(0.0..=1.0).contains(&cfg.p_noise) {
        return Err(OodError::invalid(format!("p_noise {} outside [0, 1]", cfg.p_noise)));
    }
    let dist = substitution_distribution(corpus);
    if dist.is_empty() {
        return Err(OodError::invalid("cannot noise an empty corpus"));
    }
    let sampler = WeightedIndex::new(dist.iter().map(|(_, w)| *w))
        .map_err(|e| OodError::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut substitutions = 0;
    let mut total_tokens = 0;
    let mut replacement_counts = BTreeMap::new();
    let sentences = corpus
        .iter()
        .map(|sentence| {
            sentence
                .iter()
                .map(|tok| {
                    total_tokens += 1;
                    if rng.random::<f64>() < cfg.p_noise {
                        substitutions += 1;
                        let word = &dist[sampler.sample(&mut rng)].0;
                        *replacement_counts.entry(word.clone()).or_insert(0) += 1;
                        word.clone()
                    } else {
                        tok.clone()
                    }
                })
                .collect()
        })
        .collect();
    Ok(NoisyCorpus {
        sentences,
        substitutions,
        total_tokens,
        replacement_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::ngram::tokenize;

    fn corpus(lines: &[&str]) -> Vec<Vec<String>> {
        lines.iter().map(|l| tokenize(l)).collect()
    }

    #[test]
    fn sqrt_frequency_law() {
        let dist = substitution_distribution(&corpus(&["a a a a b"]));
        assert_eq!(dist[0].0, "a");
        assert!((dist[0].1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((dist[1].1 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_noise_is_identity() {
        let c = corpus(&["one two three", "four five"]);
        let out = make_noisy_corpus(&c, &NoiseConfig { p_noise: 0.0, seed: 4 }).unwrap();
        assert_eq!(out.sentences, c);
        assert_eq!(out.substitutions, 0);
    }

    #[test]
    fn full_noise_replaces_every_position() {
        // With vocabulary {a: 4, b: 1} every position is redrawn, so a token
        // survives only through the sampler's self-mass: P(keep a) = 2/3.
        let c = vec![vec!["a".to_string(), "a".into(), "a".into(), "a".into(), "b".into()]; 20_000];
        let out = make_noisy_corpus(&c, &NoiseConfig { p_noise: 1.0, seed: 9 }).unwrap();
        assert_eq!(out.substitutions, out.total_tokens);
        let kept_a = c
            .iter()
            .zip(&out.sentences)
            .flat_map(|(a, b)| a.iter().zip(b))
            .filter(|(x, y)| x.as_str() == "a" && y.as_str() == "a")
            .count() as f64
            / 80_000.0;
        assert!((kept_a - 2.0 / 3.0).abs() < 0.01, "{kept_a}");
    }

    #[test]
    fn lengths_preserved_and_seeded() {
        let c = corpus(&["p q r s", "t u", "v"]);
        let cfg = NoiseConfig { p_noise: 0.5, seed: 17 };
        let a = make_noisy_corpus(&c, &cfg).unwrap();
        let b = make_noisy_corpus(&c, &cfg).unwrap();
        assert_eq!(a, b);
        for (x, y) in c.iter().zip(&a.sentences) {
            assert_eq!(x.len(), y.len());
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(make_noisy_corpus(&[], &NoiseConfig::default()).is_err());
        assert!(make_noisy_corpus(&corpus(&["a"]), &NoiseConfig { p_noise: 1.5, seed: 0 }).is_err());
    }
}
