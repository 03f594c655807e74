//! Pre-recorded distributions, one JSON line per step.
//!
//! ```text
//! {"vocab": ["<eos>", "a", ...], "eos_id": 0}
//! {"step": 0, "entries": [[1, 0.5], [2, 0.5]]}
//! {"step": 1, "entries": [[0, 1.0]]}
//! ```
//!
//! Distributions are served by step index; the context content is not
//! consulted.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Backend, ModelError};
use crate::distribution::{
    validate_quantized, NextTokenDistribution, Support, TokenId, Vocabulary,
};

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    vocab: Vec<String>,
    eos_id: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    step: usize,
    entries: Vec<(u32, f64)>,
}

pub struct ReplayBackend {
    vocab: Vocabulary,
    steps: Vec<NextTokenDistribution>,
}

impl ReplayBackend {
    pub fn open(path: &Path) -> Result<Self, ModelError> {
        let text = fs::read_to_string(path).map_err(|e| {
            ModelError::BackendUnavailable(format!(
                "cannot read replay file {}: {e}",
                path.display()
            ))
        })?;
        Self::parse(&text).map_err(|e| match e {
            ModelError::BackendUnavailable(msg) => {
                ModelError::BackendUnavailable(format!("{}: {msg}", path.display()))
            }
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let bad = |line: usize, msg: String| {
            ModelError::BackendUnavailable(format!("replay line {}: {msg}", line + 1))
        };
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (hline, htext) = lines
            .next()
            .ok_or_else(|| ModelError::BackendUnavailable("empty replay file".into()))?;
        let header: Header = serde_json::from_str(htext).map_err(|e| bad(hline, e.to_string()))?;
        let vocab = Vocabulary::new(header.vocab, header.eos_id.map(TokenId))?;

        let mut steps = Vec::new();
        for (n, line) in lines {
            let rec: Record = serde_json::from_str(line).map_err(|e| bad(n, e.to_string()))?;
            if rec.step != steps.len() {
                return Err(bad(
                    n,
                    format!("expected step {}, found {}", steps.len(), rec.step),
                ));
            }
            let raw: Vec<_> = rec.entries.iter().map(|&(t, p)| (TokenId(t), p)).collect();
            let dist = validate_quantized(&raw, vocab.len(), Support::Sparse)
                .map_err(|e| bad(n, e.to_string()))?;
            steps.push(dist);
        }
        Ok(Self { vocab, steps })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

impl Backend for ReplayBackend {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_distribution(
        &mut self,
        context: &[TokenId],
    ) -> Result<NextTokenDistribution, ModelError> {
        let step = context.len();
        self.steps
            .get(step)
            .cloned()
            .ok_or(ModelError::ReplayExhausted { step })
    }
}

/// Writes a replay file for `vocab` and the per-step distributions.
pub fn write_replay<W: Write>(
    mut out: W,
    vocab: &Vocabulary,
    steps: &[NextTokenDistribution],
) -> io::Result<()> {
    let header = Header {
        vocab: vocab.tokens().to_vec(),
        eos_id: vocab.eos_id().map(|t| t.0),
    };
    serde_json::to_writer(&mut out, &header)?;
    writeln!(out)?;
    for (step, dist) in steps.iter().enumerate() {
        let rec = Record {
            step,
            entries: dist.entries().iter().map(|&(t, p)| (t.0, p)).collect(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        writeln!(out)?;
    }
    Ok(())
}
