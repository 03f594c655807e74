//! Vocabulary and next-token distribution types.
//!
//! Everything downstream (pooling, coding, extraction) assumes that sender
//! and receiver see bit-identical distributions, so probabilities are
//! validated once and then quantized onto a fixed 1e-6 grid.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

/// Absolute slack allowed on total probability mass.
pub const MASS_TOLERANCE: f64 = 1e-6;

/// Quantization grid: probabilities are kept to this many decimal digits.
pub const QUANT_DIGITS: u32 = 6;
const QUANT_SCALE: f64 = 1e6;

/// Index into a [`Vocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u32> for TokenId {
    fn from(id: u32) -> Self {
        TokenId(id)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("distribution has no entries")]
    Empty,
    #[error("token {token} has negative probability {prob}")]
    NegativeProbability { token: TokenId, prob: f64 },
    #[error("token {token} has non-finite probability")]
    NonFinite { token: TokenId },
    #[error("token {0} appears more than once")]
    DuplicateToken(TokenId),
    #[error("token {id} out of range for vocabulary of size {vocab_size}")]
    IdOutOfRange { id: TokenId, vocab_size: usize },
    #[error("total probability mass {sum} out of bounds")]
    MassOutOfBounds { sum: f64 },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VocabularyError {
    #[error("vocabulary is empty")]
    Empty,
    #[error("token string {0:?} appears more than once")]
    DuplicateToken(String),
    #[error("eos id {0} is out of range")]
    EosOutOfRange(TokenId),
}

/// Ordered token strings plus an optional end-of-sequence marker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    eos_id: Option<TokenId>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>, eos_id: Option<TokenId>) -> Result<Self, VocabularyError> {
        if tokens.is_empty() {
            return Err(VocabularyError::Empty);
        }
        let mut seen = HashSet::with_capacity(tokens.len());
        for t in &tokens {
            if !seen.insert(t.as_str()) {
                return Err(VocabularyError::DuplicateToken(t.clone()));
            }
        }
        if let Some(eos) = eos_id {
            if eos.index() >= tokens.len() {
                return Err(VocabularyError::EosOutOfRange(eos));
            }
        }
        Ok(Self { tokens, eos_id })
    }

    /// Placeholder vocabulary (`[0]`, `[1]`, ...) for backends that only
    /// report a size.
    pub fn placeholder(size: usize, eos_id: Option<TokenId>) -> Result<Self, VocabularyError> {
        Self::new((0..size).map(|i| format!("[{i}]")).collect(), eos_id)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn eos_id(&self) -> Option<TokenId> {
        self.eos_id
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id.index()).map(String::as_str)
    }

    pub fn id_of(&self, token: &str) -> Option<TokenId> {
        self.tokens
            .iter()
            .position(|t| t == token)
            .map(|i| TokenId(i as u32))
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn contains(&self, id: TokenId) -> bool {
        id.index() < self.tokens.len()
    }

    /// Space-joined token strings; unknown ids render as `[id]`.
    pub fn render(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .map(|&id| {
                self.token(id)
                    .map(str::to_owned)
                    .unwrap_or_else(|| format!("[{id}]"))
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Whether a distribution is expected to carry the full probability mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    /// Full distribution: mass must be 1 within tolerance.
    Dense,
    /// Truncated (top-N) distribution: mass may fall short of 1.
    Sparse,
}

/// One step's probabilities over the vocabulary, in canonical order:
/// descending probability, ties by ascending token id.
#[derive(Debug, Clone, PartialEq)]
pub struct NextTokenDistribution {
    entries: Vec<(TokenId, f64)>,
}

/// Canonical entry order used everywhere a probability list is sorted.
pub fn canonical_order(a: &(TokenId, f64), b: &(TokenId, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

impl NextTokenDistribution {
    pub fn entries(&self) -> &[(TokenId, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Highest-probability entry (lowest id among ties).
    pub fn argmax(&self) -> Option<TokenId> {
        self.entries.first().map(|&(t, _)| t)
    }

    /// Probability of `token`, zero if it is absent.
    pub fn prob(&self, token: TokenId) -> f64 {
        self.entries
            .iter()
            .find(|&&(t, _)| t == token)
            .map_or(0.0, |&(_, p)| p)
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|&(_, p)| p).sum()
    }

    /// Copy without `token`. Mass is not renormalized.
    pub fn without(&self, token: TokenId) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .copied()
                .filter(|&(t, _)| t != token)
                .collect(),
        }
    }
}

/// Validates raw `(token, probability)` pairs and returns them in canonical
/// order. Dense inputs must sum to 1 within [`MASS_TOLERANCE`]; sparse inputs
/// must not exceed 1 by more than that.
pub fn validate_distribution(
    raw: &[(TokenId, f64)],
    vocab_size: usize,
    support: Support,
) -> Result<NextTokenDistribution, DistributionError> {
    validate_with_slack(raw, vocab_size, support, MASS_TOLERANCE)
}

/// Validation for inputs whose probabilities were already rounded to the
/// 1e-6 grid (replay files, bridge adapters). Each rounded entry may be off
/// by up to half a grid step, so the mass bound widens by `n * 5e-7`.
pub fn validate_quantized(
    raw: &[(TokenId, f64)],
    vocab_size: usize,
    support: Support,
) -> Result<NextTokenDistribution, DistributionError> {
    let slack = MASS_TOLERANCE + raw.len() as f64 * 0.5 / QUANT_SCALE;
    validate_with_slack(raw, vocab_size, support, slack)
}

fn validate_with_slack(
    raw: &[(TokenId, f64)],
    vocab_size: usize,
    support: Support,
    slack: f64,
) -> Result<NextTokenDistribution, DistributionError> {
    if raw.is_empty() {
        return Err(DistributionError::Empty);
    }
    let mut seen = HashSet::with_capacity(raw.len());
    let mut sum = 0.0;
    for &(token, prob) in raw {
        if !prob.is_finite() {
            return Err(DistributionError::NonFinite { token });
        }
        if prob < 0.0 {
            return Err(DistributionError::NegativeProbability { token, prob });
        }
        if token.index() >= vocab_size {
            return Err(DistributionError::IdOutOfRange {
                id: token,
                vocab_size,
            });
        }
        if !seen.insert(token) {
            return Err(DistributionError::DuplicateToken(token));
        }
        sum += prob;
    }
    let too_low = support == Support::Dense && sum < 1.0 - slack;
    if sum > 1.0 + slack || too_low {
        return Err(DistributionError::MassOutOfBounds { sum });
    }
    let mut entries = raw.to_vec();
    entries.sort_by(canonical_order);
    Ok(NextTokenDistribution { entries })
}

/// Rounds one probability half-to-even onto the 1e-6 grid, in grid units.
pub fn quantize_prob(p: f64) -> u32 {
    (p * QUANT_SCALE).round_ties_even() as u32
}

/// Rounds every probability half-to-even to six decimals, drops entries that
/// round to zero and re-sorts canonically.
pub fn quantize(dist: &NextTokenDistribution) -> NextTokenDistribution {
    let mut entries: Vec<(TokenId, f64)> = dist
        .entries
        .iter()
        .filter_map(|&(t, p)| {
            let units = quantize_prob(p);
            (units > 0).then(|| (t, units as f64 / QUANT_SCALE))
        })
        .collect();
    entries.sort_by(canonical_order);
    NextTokenDistribution { entries }
}
