//! Hiding and extraction.
//!
//! Hiding walks the model one token at a time: build the candidate pool from
//! the step's distribution, build its canonical Huffman code, and emit the
//! token whose codeword prefixes the unread part of the framed payload. Once
//! the frame is consumed the text is finished greedily (argmax) until EOS or
//! the length cap.
//!
//! Extraction replays the same tokens through an identically configured
//! session, rebuilds each pool and code, and concatenates codewords until
//! the frame header says the payload is complete.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coding::{
    build_canonical_huffman, decode_step, deframe, embed_step, frame, BitMessage, BitString,
    CodingError, Deframed, HEADER_BITS,
};
use crate::distribution::{NextTokenDistribution, TokenId};
use crate::models::{ModelError, ModelSession, DEFAULT_MAX_LEN};
use crate::pooling::{semantic_pool, topk_pool, CandidatePool, EosPolicy, PoolError, PoolParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error(
        "capacity exceeded: {consumed} of {needed} framed bits embedded in {} tokens",
        partial.tokens.len()
    )]
    CapacityExceeded {
        consumed: usize,
        needed: usize,
        /// Everything generated before the run gave up.
        partial: Box<StegoOutput>,
    },
    #[error("token {token} at position {position} is not in the rebuilt candidate pool")]
    TokenNotInPool { position: usize, token: TokenId },
    #[error("token sequence ended after {have} bits; the frame needs {need}")]
    IncompleteMessage { have: usize, need: usize },
    #[error("session must be fresh (at step 0), found step {0}")]
    SessionNotFresh(usize),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Coding(#[from] CodingError),
}

/// How candidate pools are built at each embedding step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum CandidateRule {
    /// Two-threshold pool (`t_a`, `t_r`).
    Semantic(PoolParams),
    /// Fixed-size baseline.
    TopK { k: usize, eos_policy: EosPolicy },
}

impl CandidateRule {
    pub fn eos_policy(&self) -> EosPolicy {
        match self {
            CandidateRule::Semantic(p) => p.eos_policy,
            CandidateRule::TopK { eos_policy, .. } => *eos_policy,
        }
    }

    /// Pool for one embedding step. EOS is removed first under
    /// [`EosPolicy::Suppress`].
    pub fn pool(
        &self,
        dist: &NextTokenDistribution,
        eos: Option<TokenId>,
    ) -> Result<CandidatePool, PoolError> {
        let suppress = self.eos_policy() == EosPolicy::Suppress;
        match self {
            CandidateRule::Semantic(p) => semantic_pool(dist, p, suppress, eos),
            CandidateRule::TopK { k, .. } => match (suppress, eos) {
                (true, Some(e)) => topk_pool(&dist.without(e), *k),
                _ => topk_pool(dist, *k),
            },
        }
    }
}

/// Only Huffman coding is implemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coding {
    #[default]
    Huffman,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StegoParams {
    pub rule: CandidateRule,
    pub max_len: usize,
    pub coding: Coding,
}

impl StegoParams {
    pub fn new(rule: CandidateRule) -> Self {
        Self {
            rule,
            max_len: DEFAULT_MAX_LEN,
            coding: Coding::Huffman,
        }
    }

    pub fn semantic(t_a: f64, t_r: f64) -> Result<Self, PoolError> {
        Ok(Self::new(CandidateRule::Semantic(PoolParams::new(
            t_a, t_r,
        )?)))
    }

    pub fn topk(k: usize) -> Self {
        Self::new(CandidateRule::TopK {
            k,
            eos_policy: EosPolicy::Suppress,
        })
    }

    pub fn with_max_len(mut self, max_len: usize) -> Self {
        self.max_len = max_len;
        self
    }

    fn validate(&self) -> Result<(), PipelineError> {
        if self.max_len == 0 {
            return Err(PipelineError::InvalidParams(
                "max_len must be positive".into(),
            ));
        }
        match self.rule {
            CandidateRule::Semantic(p) => p.validate()?,
            CandidateRule::TopK { k: 0, .. } => {
                return Err(PipelineError::InvalidParams("k must be at least 1".into()))
            }
            CandidateRule::TopK { .. } => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    /// Token chosen by the payload.
    Embed,
    /// Greedy continuation after the payload was consumed.
    Tail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub kind: StepKind,
    pub token: TokenId,
    /// Candidate pool size (1 for tail steps).
    pub pool_size: usize,
    /// Framed bits consumed at this step.
    pub bits: usize,
    pub codeword: BitString,
    /// Quantized model probability of `token`, before pooling.
    pub prob: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StegoOutput {
    pub tokens: Vec<TokenId>,
    pub steps: Vec<StepRecord>,
    /// Framed bits consumed, including any zero padding that completed the
    /// final codeword.
    pub gross_bits: usize,
    pub payload_bits: usize,
}

impl StegoOutput {
    pub fn embedding_steps(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| s.kind == StepKind::Embed)
            .count()
    }

    pub fn max_pool_size(&self) -> usize {
        self.steps.iter().map(|s| s.pool_size).max().unwrap_or(0)
    }

    /// Model probabilities of the emitted tokens, in order.
    pub fn token_probs(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.prob).collect()
    }
}

/// Hides `payload` in a fresh session's output.
pub fn hide(
    session: &mut ModelSession,
    payload: &BitMessage,
    params: &StegoParams,
) -> Result<StegoOutput, PipelineError> {
    params.validate()?;
    if session.step() != 0 {
        return Err(PipelineError::SessionNotFresh(session.step()));
    }
    let mut stream = frame(payload)?;
    let needed = stream.framed_len();
    let eos = session.eos_id();
    let mut out = StegoOutput {
        tokens: Vec::new(),
        steps: Vec::new(),
        gross_bits: 0,
        payload_bits: payload.length_bits(),
    };

    let capacity_exceeded = |out: StegoOutput, consumed: usize| PipelineError::CapacityExceeded {
        consumed,
        needed,
        partial: Box::new(out),
    };

    while out.tokens.len() < params.max_len {
        let dist = session.next_distribution(out.tokens.last().copied())?;
        let record = if !stream.is_exhausted() {
            let pool = params.rule.pool(&dist, eos)?;
            let code = build_canonical_huffman(&pool);
            let (token, bits) = embed_step(&code, &mut stream);
            let codeword = code.codeword(token).cloned().unwrap_or_default();
            StepRecord {
                kind: StepKind::Embed,
                token,
                pool_size: pool.len(),
                bits,
                codeword,
                prob: dist.prob(token),
            }
        } else {
            let token = dist
                .argmax()
                .ok_or(PipelineError::Pool(PoolError::EmptyDistribution))?;
            StepRecord {
                kind: StepKind::Tail,
                token,
                pool_size: 1,
                bits: 0,
                codeword: BitString::new(),
                prob: dist.prob(token),
            }
        };
        let token = record.token;
        out.gross_bits += record.bits;
        out.tokens.push(token);
        out.steps.push(record);

        if Some(token) == eos {
            if !stream.is_exhausted() {
                // Only reachable under the strict policy.
                let consumed = stream.cursor();
                return Err(capacity_exceeded(out, consumed));
            }
            break;
        }
    }

    if !stream.is_exhausted() {
        let consumed = stream.cursor();
        return Err(capacity_exceeded(out, consumed));
    }
    Ok(out)
}

/// Recovers the payload from `tokens` using a fresh session configured like
/// the sender's.
pub fn extract(
    session: &mut ModelSession,
    tokens: &[TokenId],
    params: &StegoParams,
) -> Result<BitMessage, PipelineError> {
    params.validate()?;
    if session.step() != 0 {
        return Err(PipelineError::SessionNotFresh(session.step()));
    }
    let eos = session.eos_id();
    let mut acc: Vec<bool> = Vec::new();
    let mut prev = None;
    for (position, &token) in tokens.iter().enumerate() {
        let dist = session.next_distribution(prev)?;
        let pool = params.rule.pool(&dist, eos)?;
        let code = build_canonical_huffman(&pool);
        let bits = decode_step(&code, token)
            .map_err(|_| PipelineError::TokenNotInPool { position, token })?;
        acc.extend_from_slice(bits.bits());
        if let Deframed::Complete(msg) = deframe(&acc) {
            return Ok(msg);
        }
        prev = Some(token);
    }
    let need = crate::coding::announced_len(&acc).unwrap_or(HEADER_BITS);
    Err(PipelineError::IncompleteMessage {
        have: acc.len(),
        need,
    })
}
