//! Helpers shared by the integration test targets: brute-force oracles and
//! random input generators.
#![allow(dead_code)]

use std::path::PathBuf;

use lingsteg::coding::HuffmanCode;
use lingsteg::distribution::{
    quantize, validate_distribution, NextTokenDistribution, Support, TokenId,
};
use lingsteg::pooling::CandidatePool;
use lingsteg::stegofile::StegoFile;
use rand::Rng;

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

/// Reads a checked-in stego file whose replay backend path is relative to
/// the crate root and makes that path absolute.
pub fn read_vector(name: &str) -> StegoFile {
    let mut file = StegoFile::read(&data_path(name)).unwrap();
    let rel = file
        .backend
        .strip_prefix("replay:")
        .expect("replay backend")
        .to_owned();
    file.backend = format!(
        "replay:{}",
        PathBuf::from(env!("CARGO_MANIFEST_DIR"))
            .join(rel)
            .display()
    );
    file
}

/// Minimum expected codeword length over all prefix codes for `weights`.
///
/// Some optimal code gives the heavier of any two symbols the shorter (or
/// equal) codeword, so it suffices to try every nondecreasing length vector
/// against the weights sorted in descending order. Lengths never exceed
/// `n - 1` in an optimal code.
pub fn optimal_expected_length(weights: &[f64]) -> f64 {
    let n = weights.len();
    if n <= 1 {
        return 0.0;
    }
    let mut w = weights.to_vec();
    w.sort_by(|a, b| b.total_cmp(a));
    let max_len = n - 1;
    let mut best = f64::INFINITY;
    let mut lengths = Vec::with_capacity(n);
    search_monotone(&w, max_len, 1, 0, &mut lengths, &mut best);
    best
}

fn search_monotone(
    w: &[f64],
    max_len: usize,
    min_len: usize,
    kraft: u64,
    lengths: &mut Vec<usize>,
    best: &mut f64,
) {
    // Kraft sums are kept as integers in units of 2^-max_len.
    let full = 1u64 << max_len;
    if lengths.len() == w.len() {
        if kraft <= full {
            let cost: f64 = w
                .iter()
                .zip(lengths.iter())
                .map(|(p, &l)| p * l as f64)
                .sum();
            if cost < *best {
                *best = cost;
            }
        }
        return;
    }
    for l in min_len..=max_len {
        let k = kraft + (1u64 << (max_len - l));
        if k > full {
            continue;
        }
        lengths.push(l);
        search_monotone(w, max_len, l, k, lengths, best);
        lengths.pop();
    }
}

/// Same minimum by trying every length vector in `1..n` with no ordering
/// assumption. Exponential; small `n` only.
pub fn exhaustive_expected_length(weights: &[f64]) -> f64 {
    let n = weights.len();
    if n <= 1 {
        return 0.0;
    }
    let max_len = n - 1;
    let full = 1u64 << max_len;
    let mut best = f64::INFINITY;
    let total = max_len.pow(n as u32);
    for mut code in 0..total {
        let mut kraft = 0u64;
        let mut cost = 0.0;
        for &p in weights {
            let l = code % max_len + 1;
            code /= max_len;
            kraft += 1u64 << (max_len - l);
            cost += p * l as f64;
        }
        if kraft <= full && cost < best {
            best = cost;
        }
    }
    best
}

pub fn expected_length(pool: &CandidatePool, code: &HuffmanCode) -> f64 {
    pool.entries()
        .iter()
        .map(|&(t, p)| {
            p * code
                .codeword(t)
                .expect("every pool token has a codeword")
                .len() as f64
        })
        .sum()
}

/// Kraft sum equals 1, checked exactly.
pub fn kraft_is_one(code: &HuffmanCode) -> bool {
    let max = code.max_len();
    if max >= 64 {
        return false;
    }
    let sum: u64 = code
        .codewords()
        .iter()
        .map(|(_, c)| 1u64 << (max - c.len()))
        .sum();
    sum == 1u64 << max
}

pub fn prefix_free(code: &HuffmanCode) -> bool {
    let words = code.codewords();
    words.iter().enumerate().all(|(i, (_, a))| {
        words
            .iter()
            .enumerate()
            .all(|(j, (_, b))| i == j || !a.is_prefix_of(b.bits()))
    })
}

/// Random quantized distribution over `vocab` tokens. Weights come from a
/// small integer range so ties are common; zero weights leave tokens out.
pub fn random_distribution<R: Rng>(rng: &mut R, vocab: usize) -> NextTokenDistribution {
    loop {
        let weights: Vec<u32> = (0..vocab)
            .map(|_| {
                if rng.gen_bool(0.3) {
                    0
                } else {
                    rng.gen_range(1..=12)
                }
            })
            .collect();
        let total: u32 = weights.iter().sum();
        if total == 0 {
            continue;
        }
        let raw: Vec<(TokenId, f64)> = weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0)
            .map(|(i, &w)| (TokenId(i as u32), w as f64 / total as f64))
            .collect();
        let dist = quantize(&validate_distribution(&raw, vocab, Support::Dense).unwrap());
        if !dist.is_empty() {
            return dist;
        }
    }
}

/// Random canonical pool of `n` entries with quantized weights.
pub fn random_pool<R: Rng>(rng: &mut R, n: usize) -> CandidatePool {
    let mut entries: Vec<(TokenId, f64)> = Vec::with_capacity(n);
    let ids = rand::seq::index::sample(rng, 64, n);
    for id in ids.iter() {
        let p = rng.gen_range(1..=400_000) as f64 / 1e6;
        entries.push((TokenId(id as u32), p));
    }
    entries.sort_by(lingsteg::distribution::canonical_order);
    CandidatePool::from_sorted(entries).unwrap()
}

/// `{ p > max(t_a, p1 - t_r) }` computed directly from the definition, with
/// EOS optionally removed first and the argmax kept when the set is empty.
pub fn brute_force_pool(
    dist: &NextTokenDistribution,
    t_a: f64,
    t_r: f64,
    eos: Option<TokenId>,
) -> Vec<TokenId> {
    let entries: Vec<(TokenId, f64)> = dist
        .entries()
        .iter()
        .copied()
        .filter(|&(t, _)| Some(t) != eos)
        .collect();
    if entries.is_empty() {
        return Vec::new();
    }
    let p1 = entries.iter().map(|e| e.1).fold(f64::MIN, f64::max);
    let threshold = t_a.max(p1 - t_r);
    let mut members: Vec<TokenId> = entries
        .iter()
        .filter(|e| e.1 > threshold)
        .map(|e| e.0)
        .collect();
    if members.is_empty() {
        let best = entries
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .unwrap();
        members.push(best.0);
    }
    members.sort();
    members
}
