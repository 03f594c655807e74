//! Seeded synthetic distributions: each step's distribution is a pure
//! function of (seed, conditioning, context).

use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Backend, Conditioning, ModelError};
use crate::distribution::{
    validate_distribution, NextTokenDistribution, Support, TokenId, Vocabulary,
};

pub const DEFAULT_VOCAB_SIZE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// `k` distinct non-EOS tokens at probability `1/k` each.
    Uniform(usize),
    /// Probability proportional to `rank^-s` over a per-step permutation of
    /// the whole vocabulary (EOS included).
    Zipf(f64),
}

impl Default for Shape {
    fn default() -> Self {
        Shape::Zipf(1.0)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Uniform(k) => write!(f, "uniform-{k}"),
            Shape::Zipf(s) => write!(f, "zipf-{s}"),
        }
    }
}

impl FromStr for Shape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(k) = s.strip_prefix("uniform-") {
            let k: usize = k.parse().map_err(|_| format!("bad uniform size {k:?}"))?;
            if k == 0 {
                return Err("uniform size must be at least 1".into());
            }
            Ok(Shape::Uniform(k))
        } else if let Some(e) = s.strip_prefix("zipf-") {
            let e: f64 = e.parse().map_err(|_| format!("bad zipf exponent {e:?}"))?;
            if !(e.is_finite() && e >= 0.0) {
                return Err("zipf exponent must be finite and non-negative".into());
            }
            Ok(Shape::Zipf(e))
        } else {
            Err(format!("unknown shape {s:?}"))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub vocab_size: usize,
    pub shape: Shape,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            vocab_size: DEFAULT_VOCAB_SIZE,
            shape: Shape::default(),
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.vocab_size < 2 {
            return Err("synthetic vocabulary needs at least 2 tokens".into());
        }
        if let Shape::Uniform(k) = self.shape {
            if k > self.vocab_size - 1 {
                return Err(format!(
                    "uniform-{k} needs more than {} non-EOS tokens",
                    self.vocab_size - 1
                ));
            }
        }
        Ok(())
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Folds seed, conditioning and context into one 64-bit key.
pub fn context_key(seed: u64, conditioning: &[u8], context: &[TokenId]) -> u64 {
    let mut h = splitmix64(seed);
    for chunk in conditioning.chunks(8) {
        let mut word = [0u8; 8];
        word[..chunk.len()].copy_from_slice(chunk);
        h = splitmix64(h ^ u64::from_le_bytes(word));
    }
    h = splitmix64(h ^ (conditioning.len() as u64).rotate_left(32));
    for t in context {
        h = splitmix64(h ^ (t.0 as u64 + 1));
    }
    h
}

/// Draw in `0..n` from the stream. The slight modulo bias is irrelevant
/// here; the fixed arithmetic keeps draws identical on every platform.
fn below(rng: &mut ChaCha8Rng, n: usize) -> usize {
    (rng.next_u64() % n as u64) as usize
}

pub struct SyntheticBackend {
    config: SyntheticConfig,
    conditioning: Vec<u8>,
    vocab: Vocabulary,
}

impl SyntheticBackend {
    pub fn open(config: &SyntheticConfig, conditioning: &Conditioning) -> Result<Self, ModelError> {
        config.validate().map_err(ModelError::BackendUnavailable)?;
        let tokens = std::iter::once("<eos>".to_owned())
            .chain((1..config.vocab_size).map(|i| format!("w{i}")))
            .collect();
        let vocab = Vocabulary::new(tokens, Some(TokenId(0)))?;
        Ok(Self {
            config: config.clone(),
            conditioning: conditioning.as_bytes().to_vec(),
            vocab,
        })
    }

    fn raw(&self, context: &[TokenId]) -> Vec<(TokenId, f64)> {
        let key = context_key(self.config.seed, &self.conditioning, context);
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let n = self.config.vocab_size;
        match self.config.shape {
            Shape::Uniform(k) => {
                // Partial Fisher-Yates over the non-EOS ids.
                let mut ids: Vec<u32> = (1..n as u32).collect();
                for i in 0..k {
                    let j = i + below(&mut rng, ids.len() - i);
                    ids.swap(i, j);
                }
                let p = 1.0 / k as f64;
                ids[..k].iter().map(|&t| (TokenId(t), p)).collect()
            }
            Shape::Zipf(s) => {
                let mut ids: Vec<u32> = (0..n as u32).collect();
                for i in (1..n).rev() {
                    let j = below(&mut rng, i + 1);
                    ids.swap(i, j);
                }
                let weights: Vec<f64> = (1..=n).map(|r| (r as f64).powf(-s)).collect();
                let total: f64 = weights.iter().sum();
                ids.iter()
                    .zip(weights)
                    .map(|(&t, w)| (TokenId(t), w / total))
                    .collect()
            }
        }
    }
}

impl Backend for SyntheticBackend {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_distribution(
        &mut self,
        context: &[TokenId],
    ) -> Result<NextTokenDistribution, ModelError> {
        let raw = self.raw(context);
        Ok(validate_distribution(
            &raw,
            self.vocab.len(),
            Support::Dense,
        )?)
    }
}
