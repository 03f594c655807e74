//! Payload rate (bits per word), perplexity, and threshold sweeps.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::coding::{BitMessage, BitString, HEADER_BITS};
use crate::distribution::TokenId;
use crate::models::toy::ToyModel;
use crate::models::{
    open_session, BackendSpec, Conditioning, ModelError, ModelSession, DEFAULT_MAX_LEN,
};
use crate::pipeline::{hide, CandidateRule, PipelineError, StegoOutput, StegoParams};
use crate::pooling::{PoolError, PoolParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no tokens to measure")]
    EmptyOutput,
    #[error("token {token} at position {position} has zero model probability")]
    ZeroProbabilityToken { position: usize, token: TokenId },
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Pool(#[from] PoolError),
}

/// `(gross, net)` bits per token: framed bits consumed, and payload bits.
pub fn bpw(output: &StegoOutput) -> Result<(f64, f64), MetricsError> {
    let n = output.tokens.len();
    if n == 0 {
        return Err(MetricsError::EmptyOutput);
    }
    Ok((
        output.gross_bits as f64 / n as f64,
        output.payload_bits as f64 / n as f64,
    ))
}

/// `2^(-mean log2 p)` over the given per-token probabilities.
pub fn perplexity_from_probs(probs: &[f64]) -> Result<f64, MetricsError> {
    if probs.is_empty() {
        return Err(MetricsError::EmptyOutput);
    }
    let mut sum = 0.0;
    for &p in probs {
        sum += p.log2();
    }
    Ok((-sum / probs.len() as f64).exp2())
}

/// Perplexity of `tokens` under a fresh session, using the full quantized
/// distribution at each step.
pub fn perplexity(session: &mut ModelSession, tokens: &[TokenId]) -> Result<f64, MetricsError> {
    let mut probs = Vec::with_capacity(tokens.len());
    let mut prev = None;
    for (position, &token) in tokens.iter().enumerate() {
        let p = session.next_distribution(prev)?.prob(token);
        if p <= 0.0 {
            return Err(MetricsError::ZeroProbabilityToken { position, token });
        }
        probs.push(p);
        prev = Some(token);
    }
    perplexity_from_probs(&probs)
}

/// One cell of a threshold grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub t_a: f64,
    pub t_r: f64,
    pub n_samples: usize,
    pub mean_gross_bpw: f64,
    pub mean_net_bpw: f64,
    pub mean_ppl: f64,
    pub capacity_failures: usize,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub backend: BackendSpec,
    pub t_a: Vec<f64>,
    pub t_r: Vec<f64>,
    pub n_samples: usize,
    pub payload_bits: usize,
    pub seed: u64,
    pub max_len: usize,
    /// Cycled over samples. When `None`, toy samples cycle through the
    /// corpus topics and other backends get the sample index as text.
    pub conditioning: Option<Vec<Conditioning>>,
}

impl SweepConfig {
    pub fn new(backend: BackendSpec, t_a: Vec<f64>, t_r: Vec<f64>) -> Self {
        Self {
            backend,
            t_a,
            t_r,
            n_samples: 200,
            payload_bits: 32,
            seed: 0,
            max_len: DEFAULT_MAX_LEN,
            conditioning: None,
        }
    }

    fn conditioning_for(&self, sample: usize) -> Conditioning {
        match (&self.conditioning, &self.backend) {
            (Some(list), _) if !list.is_empty() => list[sample % list.len()].clone(),
            (Some(_), _) => Conditioning::empty(),
            (None, BackendSpec::Toy) => {
                let topics = ToyModel::bundled().topics();
                Conditioning::from_text(&topics[sample % topics.len()])
            }
            (None, BackendSpec::Synthetic(_)) => Conditioning::from_text(&sample.to_string()),
            (None, _) => Conditioning::empty(),
        }
    }
}

/// Payload for one sample. Depends only on `(seed, sample)`, so every grid
/// cell sees the same payloads.
pub fn sample_payload(seed: u64, sample: usize, bits: usize) -> BitMessage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample as u64);
    let mut b = BitString::new();
    for _ in 0..bits {
        b.push(rng.gen::<bool>());
    }
    BitMessage::new(b)
}

struct Sample {
    gross_bpw: f64,
    net_bpw: f64,
    ppl: f64,
    failed: bool,
}

/// Rates for a finished or abandoned run. An abandoned run is scored on what
/// it actually produced: framed bits consumed, and payload bits that made it
/// past the header.
fn score(out: &StegoOutput, consumed: usize, failed: bool) -> Result<Sample, MetricsError> {
    let n = out.tokens.len();
    if n == 0 {
        return Err(MetricsError::EmptyOutput);
    }
    let payload = consumed.saturating_sub(HEADER_BITS).min(out.payload_bits);
    Ok(Sample {
        gross_bpw: consumed as f64 / n as f64,
        net_bpw: payload as f64 / n as f64,
        ppl: perplexity_from_probs(&out.token_probs())?,
        failed,
    })
}

fn run_sample(
    cfg: &SweepConfig,
    params: &StegoParams,
    sample: usize,
) -> Result<Sample, MetricsError> {
    let mut session =
        open_session(&cfg.backend, &cfg.conditioning_for(sample))?.with_max_len(cfg.max_len);
    let payload = sample_payload(cfg.seed, sample, cfg.payload_bits);
    match hide(&mut session, &payload, params) {
        Ok(out) => score(&out, out.gross_bits, false),
        Err(PipelineError::CapacityExceeded {
            consumed, partial, ..
        }) => score(&partial, consumed, true),
        Err(e) => Err(e.into()),
    }
}

/// Runs `n_samples` hides per `(t_a, t_r)` cell. Rows come out `t_r`-major:
/// all `t_a` values for the first `t_r`, then the next `t_r`.
///
/// Means include samples that hit the capacity limit, scored on their
/// partial output, so every cell has defined means.
pub fn sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>, MetricsError> {
    if cfg.t_a.is_empty() || cfg.t_r.is_empty() {
        return Err(MetricsError::InvalidSweep(
            "threshold lists must be nonempty".into(),
        ));
    }
    if cfg.n_samples == 0 {
        return Err(MetricsError::InvalidSweep(
            "n_samples must be at least 1".into(),
        ));
    }
    let mut cells = Vec::new();
    for &t_r in &cfg.t_r {
        for &t_a in &cfg.t_a {
            let params = StegoParams::new(CandidateRule::Semantic(PoolParams::new(t_a, t_r)?))
                .with_max_len(cfg.max_len);
            cells.push((t_a, t_r, params));
        }
    }
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.n_samples).map(move |s| (c, s)))
        .collect();
    let samples = jobs
        .par_iter()
        .map(|&(c, s)| run_sample(cfg, &cells[c].2, s))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(cells
        .iter()
        .zip(samples.chunks(cfg.n_samples))
        .map(|(&(t_a, t_r, _), chunk)| {
            let n = chunk.len() as f64;
            SweepRow {
                t_a,
                t_r,
                n_samples: chunk.len(),
                mean_gross_bpw: chunk.iter().map(|s| s.gross_bpw).sum::<f64>() / n,
                mean_net_bpw: chunk.iter().map(|s| s.net_bpw).sum::<f64>() / n,
                mean_ppl: chunk.iter().map(|s| s.ppl).sum::<f64>() / n,
                capacity_failures: chunk.iter().filter(|s| s.failed).count(),
            }
        })
        .collect())
}

pub const CSV_HEADER: &str = "t_a,t_r,n,mean_gross_bpw,mean_net_bpw,mean_ppl,capacity_failures";

pub fn write_csv<W: Write>(mut out: W, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{:.6},{:.6},{},{:.6},{:.6},{:.6},{}",
            r.t_a,
            r.t_r,
            r.n_samples,
            r.mean_gross_bpw,
            r.mean_net_bpw,
            r.mean_ppl,
            r.capacity_failures
        )?;
    }
    Ok(())
}
