//! Candidate pool construction.
//!
//! [`semantic_pool`] admits a token only when its probability clears both an
//! absolute floor (`t_a`) and a band below the step's top probability
//! (`t_r`): `p > max(t_a, p_top - t_r)`. The floor cuts tokens that are
//! unlikely in absolute terms; the band cuts tokens that are far behind the
//! leader even when their absolute probability is not tiny.
//!
//! [`topk_pool`] is the fixed-size baseline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::{NextTokenDistribution, TokenId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoolError {
    #[error("distribution is empty after end-of-sequence suppression")]
    EmptyDistribution,
    #[error("invalid pool parameters: {0}")]
    InvalidParams(String),
}

/// What to do with the end-of-sequence token while payload bits remain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EosPolicy {
    /// Remove EOS from the distribution before pooling.
    #[default]
    Suppress,
    /// Leave EOS in; selecting it with bits remaining is a capacity failure.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolParams {
    pub t_a: f64,
    pub t_r: f64,
    #[serde(default)]
    pub max_pool_size: Option<usize>,
    #[serde(default)]
    pub eos_policy: EosPolicy,
}

impl PoolParams {
    pub fn new(t_a: f64, t_r: f64) -> Result<Self, PoolError> {
        let p = Self {
            t_a,
            t_r,
            max_pool_size: None,
            eos_policy: EosPolicy::Suppress,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_max_pool_size(mut self, size: Option<usize>) -> Result<Self, PoolError> {
        self.max_pool_size = size;
        self.validate()?;
        Ok(self)
    }

    pub fn with_eos_policy(mut self, policy: EosPolicy) -> Self {
        self.eos_policy = policy;
        self
    }

    pub fn validate(&self) -> Result<(), PoolError> {
        if !(0.0..1.0).contains(&self.t_a) {
            return Err(PoolError::InvalidParams(format!(
                "t_a must lie in [0, 1), got {}",
                self.t_a
            )));
        }
        if !(self.t_r > 0.0 && self.t_r <= 1.0) {
            return Err(PoolError::InvalidParams(format!(
                "t_r must lie in (0, 1], got {}",
                self.t_r
            )));
        }
        if self.max_pool_size == Some(0) {
            return Err(PoolError::InvalidParams(
                "max_pool_size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Admissible tokens for one step, in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    entries: Vec<(TokenId, f64)>,
}

impl CandidatePool {
    /// Wraps entries that are already canonical and nonempty.
    pub fn from_sorted(entries: Vec<(TokenId, f64)>) -> Option<Self> {
        if entries.is_empty() {
            return None;
        }
        let sorted = entries
            .windows(2)
            .all(|w| crate::distribution::canonical_order(&w[0], &w[1]).is_lt());
        sorted.then_some(Self { entries })
    }

    pub fn entries(&self) -> &[(TokenId, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, token: TokenId) -> bool {
        self.entries.iter().any(|&(t, _)| t == token)
    }

    pub fn tokens(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.entries.iter().map(|&(t, _)| t)
    }
}

/// Threshold pool: keeps `{ p > max(t_a, p_top - t_r) }`.
///
/// When `suppress_eos` is set the EOS token is dropped before `p_top` is
/// taken. If nothing clears the threshold the argmax alone is returned, so a
/// step always has at least one candidate (and then carries zero bits).
pub fn semantic_pool(
    dist: &NextTokenDistribution,
    params: &PoolParams,
    suppress_eos: bool,
    eos_id: Option<TokenId>,
) -> Result<CandidatePool, PoolError> {
    let suppressed;
    let dist = match (suppress_eos, eos_id) {
        (true, Some(eos)) => {
            suppressed = dist.without(eos);
            &suppressed
        }
        _ => dist,
    };
    let entries = dist.entries();
    let top = entries.first().ok_or(PoolError::EmptyDistribution)?.1;
    let threshold = params.t_a.max(top - params.t_r);

    // Canonical order makes the admitted set a prefix.
    let mut admitted: Vec<_> = entries
        .iter()
        .copied()
        .take_while(|&(_, p)| p > threshold)
        .collect();
    if admitted.is_empty() {
        admitted.push(entries[0]);
    }
    if let Some(cap) = params.max_pool_size {
        admitted.truncate(cap);
    }
    Ok(CandidatePool { entries: admitted })
}

/// The `k` most probable tokens (fewer if the support is smaller).
pub fn topk_pool(dist: &NextTokenDistribution, k: usize) -> Result<CandidatePool, PoolError> {
    if k == 0 {
        return Err(PoolError::InvalidParams("k must be at least 1".into()));
    }
    if dist.is_empty() {
        return Err(PoolError::EmptyDistribution);
    }
    Ok(CandidatePool {
        entries: dist.entries().iter().copied().take(k).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::{validate_distribution, Support};
    use proptest::prelude::*;

    fn dist(v: &[(u32, f64)]) -> NextTokenDistribution {
        let raw: Vec<_> = v.iter().map(|&(t, p)| (TokenId(t), p)).collect();
        validate_distribution(&raw, 64, Support::Sparse).unwrap()
    }

    fn ids(pool: &CandidatePool) -> Vec<u32> {
        pool.tokens().map(|t| t.0).collect()
    }

    #[test]
    fn band_threshold_wins() {
        let d = dist(&[(0, 0.5), (1, 0.3), (2, 0.15), (3, 0.05)]);
        let pool = semantic_pool(&d, &PoolParams::new(0.1, 0.25).unwrap(), false, None).unwrap();
        assert_eq!(pool.entries(), &[(TokenId(0), 0.5), (TokenId(1), 0.3)]);
    }

    #[test]
    fn full_support_limit() {
        let d = dist(&[(0, 0.5), (1, 0.3), (2, 0.15), (3, 0.05)]);
        let pool = semantic_pool(&d, &PoolParams::new(0.0, 1.0).unwrap(), false, None).unwrap();
        assert_eq!(ids(&pool), vec![0, 1, 2, 3]);
    }

    #[test]
    fn cuts_relatively_low_words() {
        // I, dog, car, me, drive, and
        let d = dist(&[
            (0, 0.30),
            (1, 0.28),
            (2, 0.27),
            (3, 0.06),
            (4, 0.05),
            (5, 0.04),
        ]);
        let pool = semantic_pool(&d, &PoolParams::new(0.01, 0.05).unwrap(), false, None).unwrap();
        assert_eq!(ids(&pool), vec![0, 1, 2]);
    }

    #[test]
    fn argmax_guard() {
        let d = dist(&[(0, 0.09), (1, 0.08)]);
        let pool = semantic_pool(&d, &PoolParams::new(0.1, 0.05).unwrap(), false, None).unwrap();
        assert_eq!(pool.entries(), &[(TokenId(0), 0.09)]);
    }

    #[test]
    fn equality_excludes() {
        // threshold = 0.5 - 0.2, which is exactly the binary64 value of 0.3
        let d = dist(&[(0, 0.5), (1, 0.3), (2, 0.2)]);
        let pool = semantic_pool(&d, &PoolParams::new(0.0, 0.2).unwrap(), false, None).unwrap();
        assert_eq!(ids(&pool), vec![0]);
        let d = dist(&[(0, 0.5), (1, 0.3), (2, 0.2)]);
        let pool = semantic_pool(&d, &PoolParams::new(0.3, 1.0).unwrap(), false, None).unwrap();
        assert_eq!(ids(&pool), vec![0]);
    }

    #[test]
    fn eos_suppression_recomputes_top() {
        let d = dist(&[(9, 0.6), (0, 0.3), (1, 0.1)]);
        let params = PoolParams::new(0.0, 0.25).unwrap();
        let kept = semantic_pool(&d, &params, false, Some(TokenId(9))).unwrap();
        assert_eq!(ids(&kept), vec![9]);
        let suppressed = semantic_pool(&d, &params, true, Some(TokenId(9))).unwrap();
        assert_eq!(ids(&suppressed), vec![0, 1]);

        let only_eos = dist(&[(9, 1.0)]);
        assert_eq!(
            semantic_pool(&only_eos, &params, true, Some(TokenId(9))),
            Err(PoolError::EmptyDistribution)
        );
    }

    #[test]
    fn max_pool_size_truncates() {
        let d = dist(&[(0, 0.25), (1, 0.25), (2, 0.25), (3, 0.25)]);
        let params = PoolParams::new(0.0, 1.0)
            .unwrap()
            .with_max_pool_size(Some(3))
            .unwrap();
        assert_eq!(
            ids(&semantic_pool(&d, &params, false, None).unwrap()),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn param_validation() {
        assert!(PoolParams::new(1.0, 0.5).is_err());
        assert!(PoolParams::new(-0.1, 0.5).is_err());
        assert!(PoolParams::new(0.1, 0.0).is_err());
        assert!(PoolParams::new(0.1, 1.5).is_err());
        assert!(PoolParams::new(0.0, 1.0)
            .unwrap()
            .with_max_pool_size(Some(0))
            .is_err());
    }

    #[test]
    fn topk_examples() {
        let d = dist(&[(0, 0.5), (1, 0.3), (2, 0.2)]);
        assert_eq!(ids(&topk_pool(&d, 2).unwrap()), vec![0, 1]);
        assert_eq!(ids(&topk_pool(&dist(&[(0, 1.0)]), 8).unwrap()), vec![0]);
        let tie = dist(&[(1, 0.4), (0, 0.4), (2, 0.2)]);
        assert_eq!(ids(&topk_pool(&tie, 1).unwrap()), vec![0]);
        assert!(topk_pool(&d, 0).is_err());
    }

    fn arb_dist() -> impl Strategy<Value = NextTokenDistribution> {
        prop::collection::vec(1u32..200, 1..20).prop_map(|w| {
            let total: u32 = w.iter().sum();
            let raw: Vec<_> = w
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    (
                        TokenId(i as u32),
                        (x as f64 / total as f64 * 1e6).round() / 1e6,
                    )
                })
                .collect();
            crate::distribution::validate_quantized(&raw, 64, Support::Sparse).unwrap()
        })
    }

    proptest! {
        #[test]
        fn monotone_in_band(d in arb_dist(), t_a in 0.0f64..0.5, a in 0.01f64..1.0, b in 0.01f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let small = semantic_pool(&d, &PoolParams::new(t_a, lo).unwrap(), false, None).unwrap();
            let large = semantic_pool(&d, &PoolParams::new(t_a, hi).unwrap(), false, None).unwrap();
            prop_assert!(small.tokens().all(|t| large.contains(t)));
        }

        #[test]
        fn antimonotone_in_floor(d in arb_dist(), t_r in 0.01f64..1.0, a in 0.0f64..0.99, b in 0.0f64..0.99) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let loose = semantic_pool(&d, &PoolParams::new(lo, t_r).unwrap(), false, None).unwrap();
            let tight = semantic_pool(&d, &PoolParams::new(hi, t_r).unwrap(), false, None).unwrap();
            prop_assert!(tight.tokens().all(|t| loose.contains(t)));
        }

        #[test]
        fn members_dominate_non_members(d in arb_dist(), t_a in 0.0f64..0.5, t_r in 0.01f64..1.0) {
            let pool = semantic_pool(&d, &PoolParams::new(t_a, t_r).unwrap(), false, None).unwrap();
            let min_in = pool.entries().iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
            for &(t, p) in d.entries() {
                if !pool.contains(t) {
                    prop_assert!(p <= min_in);
                }
            }
        }

        #[test]
        fn zero_floor_wide_band_is_full_support(d in arb_dist()) {
            let top = d.entries()[0].1;
            let t_r = top.clamp(0.01, 1.0);
            let pool = semantic_pool(&d, &PoolParams::new(0.0, t_r).unwrap(), false, None).unwrap();
            prop_assert_eq!(pool.len(), d.len());
        }

        #[test]
        fn topk_size(d in arb_dist(), k in 1usize..30) {
            prop_assert_eq!(topk_pool(&d, k).unwrap().len(), k.min(d.len()));
        }
    }
}
