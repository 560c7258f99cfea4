//! Seeded hash embedding used by the scripted provider family.
//!
//! Each token is first mapped to its concept (see
//! `assets/embedding_concepts.txt`), then the concept is feature-hashed
//! into two signed buckets. Words that share a concept share buckets, so
//! fixtures can be authored with predictable semantic neighbours.

use std::collections::BTreeMap;

use super::{EmbeddingProvider, EmbeddingVector, LlmError};
use crate::text::tokenize;

const CONCEPTS_ASSET: &str = include_str!("../../assets/embedding_concepts.txt");

#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dimension: usize,
    seed: u64,
    concepts: BTreeMap<String, String>,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder::new(Self::DEFAULT_DIMENSION, Self::DEFAULT_SEED)
    }
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    // final avalanche so nearby inputs spread across buckets
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^ (h >> 33)
}

impl HashEmbedder {
    pub const DEFAULT_DIMENSION: usize = 64;
    pub const DEFAULT_SEED: u64 = 0x5eed_2025;

    pub fn new(dimension: usize, seed: u64) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        let mut concepts = BTreeMap::new();
        for line in CONCEPTS_ASSET
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
        {
            let mut words = line.split_whitespace();
            if let Some(head) = words.next() {
                concepts.insert(head.to_string(), head.to_string());
                for w in words {
                    concepts
                        .entry(w.to_string())
                        .or_insert_with(|| head.to_string());
                }
            }
        }
        HashEmbedder {
            dimension,
            seed,
            concepts,
        }
    }

    /// Concept a token maps to; unknown tokens are their own concept.
    pub fn concept<'a>(&'a self, token: &'a str) -> &'a str {
        self.concepts
            .get(token)
            .map(String::as_str)
            .unwrap_or(token)
    }

    fn bucket(&self, key: &str) -> [(usize, f64); 2] {
        let h = fnv1a(self.seed, key.as_bytes());
        let sign = |bit: u32| if (h >> bit) & 1 == 1 { -1.0 } else { 1.0 };
        let d = self.dimension as u64;
        [
            ((h % d) as usize, sign(63)),
            (((h >> 20) % d) as usize, sign(62)),
        ]
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, LlmError> {
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Err(LlmError::InvalidRequest("cannot embed empty text".into()));
        }
        let mut tokens = tokenize(trimmed);
        if tokens.is_empty() {
            tokens.push(trimmed.to_lowercase());
        }
        let mut values = vec![0.0; self.dimension];
        for t in &tokens {
            for (i, s) in self.bucket(self.concept(t)) {
                values[i] += s;
            }
        }
        if values.iter().all(|v| *v == 0.0) {
            values[self.bucket(&trimmed.to_lowercase())[0].0] = 1.0;
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(EmbeddingVector::new(values))
    }
}
