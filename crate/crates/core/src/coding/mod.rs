//! Huffman token selection and message framing.

mod bits;
mod framing;
mod huffman;

use thiserror::Error;

use crate::distribution::TokenId;

pub use bits::{BitMessage, BitString, HexError};
pub use framing::{announced_len, deframe, frame, Deframed, FramedStream, HEADER_BITS};
pub use huffman::{build_canonical_huffman, code_lengths, decode_step, embed_step, HuffmanCode};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodingError {
    #[error("token {0} is not in the candidate pool")]
    TokenNotInPool(TokenId),
    #[error("payload of {0} bits does not fit the 32-bit length header")]
    MessageTooLong(usize),
}
