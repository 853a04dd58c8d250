//! Seeded toy corpora for overfitting experiments.
//!
//! Tokens `w00..w{N-1}` are split into a salient block and a filler block.
//! Each token has a few fixed successors inside its own block, so sentences
//! are short walks on a sparse chain. Reference summaries are the salient
//! sentences of a document, copied verbatim.

use rand::seq::SliceRandom;
use rand::Rng;

use super::Document;

#[derive(Clone, Debug)]
pub struct SyntheticConfig {
    pub documents: usize,
    pub vocab_size: usize,
    /// Tokens `0..salient_tokens` form the salient block.
    pub salient_tokens: usize,
    pub successors: usize,
    pub sentences: (usize, usize),
    pub sentence_len: (usize, usize),
    pub positives: (usize, usize),
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            documents: 20,
            vocab_size: 60,
            salient_tokens: 20,
            successors: 3,
            sentences: (8, 12),
            sentence_len: (4, 7),
            positives: (2, 3),
        }
    }
}

pub fn token_name(i: usize) -> String {
    format!("w{i:02}")
}

struct Chain {
    next: Vec<Vec<usize>>,
}

impl Chain {
    fn new(config: &SyntheticConfig, rng: &mut impl Rng) -> Self {
        let next = (0..config.vocab_size)
            .map(|t| {
                let block: Vec<usize> = if t < config.salient_tokens {
                    (0..config.salient_tokens).collect()
                } else {
                    (config.salient_tokens..config.vocab_size).collect()
                };
                block.choose_multiple(rng, config.successors).copied().collect()
            })
            .collect();
        Self { next }
    }

    fn walk(&self, block: std::ops::Range<usize>, len: usize, rng: &mut impl Rng) -> Vec<String> {
        let mut t = rng.gen_range(block);
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            out.push(token_name(t));
            t = *self.next[t].choose(rng).expect("non-empty successors");
        }
        out
    }
}

/// Generates documents with summaries; labels are left for the oracle.
pub fn generate(config: &SyntheticConfig, rng: &mut impl Rng) -> Vec<Document> {
    let chain = Chain::new(config, rng);
    (0..config.documents)
        .map(|d| {
            let n = rng.gen_range(config.sentences.0..=config.sentences.1);
            let k = rng.gen_range(config.positives.0..=config.positives.1).min(n);
            let positive: Vec<usize> = {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.shuffle(rng);
                idx.truncate(k);
                idx
            };
            let mut sentences = Vec::with_capacity(n);
            let mut summary = Vec::new();
            for j in 0..n {
                let len = rng.gen_range(config.sentence_len.0..=config.sentence_len.1);
                if positive.contains(&j) {
                    let s = chain.walk(0..config.salient_tokens, len, rng);
                    summary.push(s.clone());
                    sentences.push(s);
                } else {
                    sentences.push(chain.walk(config.salient_tokens..config.vocab_size, len, rng));
                }
            }
            Document {
                id: format!("synthetic-{d:03}"),
                sentences,
                summary: Some(summary),
                labels: None,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn respects_shape_ranges() {
        let config = SyntheticConfig::default();
        let docs = generate(&config, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(docs.len(), 20);
        let mut vocab = HashSet::new();
        for d in &docs {
            assert!((8..=12).contains(&d.sentences.len()));
            let k = d.summary.as_ref().unwrap().len();
            assert!((2..=3).contains(&k));
            for s in &d.sentences {
                assert!((4..=7).contains(&s.len()));
                vocab.extend(s.iter().cloned());
            }
        }
        assert!(vocab.len() <= 60);
    }

    #[test]
    fn deterministic_under_seed() {
        let config = SyntheticConfig::default();
        let a = generate(&config, &mut ChaCha8Rng::seed_from_u64(1));
        let b = generate(&config, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
    }
}
