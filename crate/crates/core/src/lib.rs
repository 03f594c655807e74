//! Generative linguistic steganography over autoregressive next-token
//! distributions.
//!
//! A payload is framed with a 32-bit length header and embedded one token at
//! a time: each step's distribution is cut down to a candidate pool, the pool
//! gets a canonical Huffman code, and the token whose codeword prefixes the
//! remaining bits is emitted. The receiver replays the tokens through the
//! same model and parameters to recover the bits.
//!
//! ```
//! use lingsteg::coding::BitMessage;
//! use lingsteg::models::{open_session, Conditioning};
//! use lingsteg::pipeline::{extract, hide, StegoParams};
//!
//! let spec = "synthetic:seed=7".parse().unwrap();
//! let params = StegoParams::semantic(0.01, 0.3).unwrap();
//! let msg = BitMessage::from_hex("deadbeef").unwrap();
//!
//! let mut tx = open_session(&spec, &Conditioning::empty()).unwrap();
//! let out = hide(&mut tx, &msg, &params).unwrap();
//!
//! let mut rx = open_session(&spec, &Conditioning::empty()).unwrap();
//! assert_eq!(extract(&mut rx, &out.tokens, &params).unwrap(), msg);
//! ```

pub mod cli;
pub mod coding;
pub mod distribution;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod pooling;
pub mod stegofile;
