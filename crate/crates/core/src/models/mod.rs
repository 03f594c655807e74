//! Conditional next-token models.
//!
//! A [`ModelSession`] wraps one [`Backend`] together with the tokens emitted
//! so far. Backends must be deterministic: the same conditioning and context
//! always produce the same distribution, because the receiver re-derives
//! every candidate pool from scratch.

pub mod bridge;
pub mod replay;
pub mod synthetic;
pub mod toy;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use thiserror::Error;

use crate::distribution::{
    quantize, DistributionError, NextTokenDistribution, TokenId, Vocabulary, VocabularyError,
};

pub use synthetic::{Shape, SyntheticConfig};

/// Default cap on emitted tokens per session.
pub const DEFAULT_MAX_LEN: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown backend {0:?}")]
    UnknownBackend(String),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("step limit of {max_len} tokens exceeded")]
    StepLimitExceeded { max_len: usize },
    #[error("replay file has no distribution for step {step}")]
    ReplayExhausted { step: usize },
    #[error("bridge protocol error: {0}")]
    BridgeProtocolError(String),
    #[error("backend produced an invalid distribution: {0}")]
    InvalidDistribution(#[from] DistributionError),
    #[error("backend has an invalid vocabulary: {0}")]
    InvalidVocabulary(#[from] VocabularyError),
    #[error("token {0} is not in the vocabulary")]
    TokenOutOfRange(TokenId),
    #[error("{0}")]
    InvalidStep(String),
}

/// Opaque conditioning bytes: the stand-in for the cover image. A topic name
/// for the toy model, extra seed material for the synthetic model, whatever
/// the adapter expects for a bridge (typically an image path).
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Conditioning(Vec<u8>);

impl Conditioning {
    pub fn new(bytes: Vec<u8>) -> Self {
        Self(bytes)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_text(text: &str) -> Self {
        Self(text.as_bytes().to_vec())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn to_base64(&self) -> String {
        BASE64.encode(&self.0)
    }

    pub fn from_base64(s: &str) -> Result<Self, base64::DecodeError> {
        BASE64.decode(s).map(Self)
    }
}

/// Which model to drive, parsed from strings such as `toy`,
/// `synthetic:seed=7,shape=uniform-4,vocab=64`, `replay:path/to/file.jsonl`
/// or `bridge:python adapter.py --flag`.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendSpec {
    Toy,
    Synthetic(SyntheticConfig),
    Replay(PathBuf),
    /// Program and arguments, split on whitespace.
    Bridge(Vec<String>),
}

impl FromStr for BackendSpec {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = match s.split_once(':') {
            Some((k, r)) => (k, Some(r)),
            None => (s, None),
        };
        let bad = |msg: String| ModelError::UnknownBackend(format!("{s}: {msg}"));
        match kind {
            "toy" if rest.is_none_or(str::is_empty) => Ok(BackendSpec::Toy),
            "synthetic" => {
                let mut cfg = SyntheticConfig::default();
                for pair in rest.unwrap_or("").split(',').filter(|p| !p.is_empty()) {
                    let (key, value) = pair
                        .split_once('=')
                        .ok_or_else(|| bad(format!("expected key=value, got {pair:?}")))?;
                    match key.trim() {
                        "seed" => {
                            cfg.seed = value
                                .parse()
                                .map_err(|_| bad(format!("bad seed {value:?}")))?
                        }
                        "vocab" => {
                            cfg.vocab_size = value
                                .parse()
                                .map_err(|_| bad(format!("bad vocab {value:?}")))?
                        }
                        "shape" => cfg.shape = value.parse().map_err(bad)?,
                        other => return Err(bad(format!("unknown key {other:?}"))),
                    }
                }
                cfg.validate().map_err(bad)?;
                Ok(BackendSpec::Synthetic(cfg))
            }
            "replay" => match rest {
                Some(path) if !path.is_empty() => Ok(BackendSpec::Replay(PathBuf::from(path))),
                _ => Err(bad("missing replay path".into())),
            },
            "bridge" => {
                let argv: Vec<String> = rest
                    .unwrap_or("")
                    .split_whitespace()
                    .map(str::to_owned)
                    .collect();
                if argv.is_empty() {
                    return Err(bad("missing bridge command".into()));
                }
                Ok(BackendSpec::Bridge(argv))
            }
            _ => Err(ModelError::UnknownBackend(s.to_owned())),
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Toy => f.write_str("toy"),
            BackendSpec::Synthetic(c) => write!(
                f,
                "synthetic:seed={},vocab={},shape={}",
                c.seed, c.vocab_size, c.shape
            ),
            BackendSpec::Replay(p) => write!(f, "replay:{}", p.display()),
            BackendSpec::Bridge(argv) => write!(f, "bridge:{}", argv.join(" ")),
        }
    }
}

/// The conditional model contract: next-token probabilities given the
/// tokens emitted so far. Conditioning is bound when the backend is opened.
pub trait Backend: Send {
    fn vocabulary(&self) -> &Vocabulary;

    fn next_distribution(
        &mut self,
        context: &[TokenId],
    ) -> Result<NextTokenDistribution, ModelError>;
}

/// One generation run: a backend plus the emitted context.
pub struct ModelSession {
    backend: Box<dyn Backend>,
    vocab: Vocabulary,
    context: Vec<TokenId>,
    step: usize,
    max_len: usize,
    recorded: Option<Vec<NextTokenDistribution>>,
}

impl fmt::Debug for ModelSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSession")
            .field("vocab_size", &self.vocab.len())
            .field("context", &self.context)
            .field("step", &self.step)
            .field("max_len", &self.max_len)
            .finish()
    }
}

impl ModelSession {
    pub fn new(backend: Box<dyn Backend>) -> Self {
        let vocab = backend.vocabulary().clone();
        Self {
            backend,
            vocab,
            context: Vec::new(),
            step: 0,
            max_len: DEFAULT_MAX_LEN,
            recorded: None,
        }
    }

    pub fn with_max_len(mut self, max_len: usize) -> Self {
        self.max_len = max_len;
        self
    }

    /// Keep every served distribution so the session can be dumped as a
    /// replay file afterwards.
    pub fn recording(mut self) -> Self {
        self.recorded = Some(Vec::new());
        self
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn eos_id(&self) -> Option<TokenId> {
        self.vocab.eos_id()
    }

    pub fn context(&self) -> &[TokenId] {
        &self.context
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn recorded(&self) -> Option<&[NextTokenDistribution]> {
        self.recorded.as_deref()
    }

    /// Feeds back the previously emitted token (absent at step 0) and returns
    /// the quantized distribution for the next position.
    pub fn next_distribution(
        &mut self,
        last_token: Option<TokenId>,
    ) -> Result<NextTokenDistribution, ModelError> {
        match (self.step, last_token) {
            (0, Some(_)) => {
                return Err(ModelError::InvalidStep(
                    "no token can precede the first step".into(),
                ))
            }
            (s, None) if s > 0 => {
                return Err(ModelError::InvalidStep(format!(
                    "step {s} needs the previously emitted token"
                )))
            }
            _ => {}
        }
        if let Some(t) = last_token {
            if !self.vocab.contains(t) {
                return Err(ModelError::TokenOutOfRange(t));
            }
        }
        let len_after = self.context.len() + usize::from(last_token.is_some());
        if len_after >= self.max_len {
            return Err(ModelError::StepLimitExceeded {
                max_len: self.max_len,
            });
        }
        self.context.extend(last_token);
        let dist = quantize(&self.backend.next_distribution(&self.context)?);
        self.step += 1;
        if let Some(rec) = self.recorded.as_mut() {
            rec.push(dist.clone());
        }
        Ok(dist)
    }
}

/// Opens a fresh session (step 0, empty context) on the given backend.
pub fn open_session(
    spec: &BackendSpec,
    conditioning: &Conditioning,
) -> Result<ModelSession, ModelError> {
    let backend: Box<dyn Backend> = match spec {
        BackendSpec::Toy => Box::new(toy::ToyBackend::open(conditioning)?),
        BackendSpec::Synthetic(cfg) => {
            Box::new(synthetic::SyntheticBackend::open(cfg, conditioning)?)
        }
        BackendSpec::Replay(path) => Box::new(replay::ReplayBackend::open(path)?),
        BackendSpec::Bridge(argv) => Box::new(bridge::BridgeBackend::spawn(argv, conditioning)?),
    };
    Ok(ModelSession::new(backend))
}
