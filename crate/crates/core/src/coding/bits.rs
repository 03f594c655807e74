use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HexError {
    #[error("invalid hex digit {0:?}")]
    InvalidDigit(char),
}

/// A finite bit sequence, most significant bit first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct BitString(Vec<bool>);

impl BitString {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![false; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn push(&mut self, bit: bool) {
        self.0.push(bit);
    }

    pub fn extend_from(&mut self, other: &BitString) {
        self.0.extend_from_slice(&other.0);
    }

    pub fn is_prefix_of(&self, bits: &[bool]) -> bool {
        bits.starts_with(&self.0)
    }

    /// Adds one, treating the string as an unsigned big-endian integer of
    /// fixed width. Returns false on overflow.
    pub(crate) fn increment(&mut self) -> bool {
        for bit in self.0.iter_mut().rev() {
            if *bit {
                *bit = false;
            } else {
                *bit = true;
                return true;
            }
        }
        false
    }

    /// Parses a `0`/`1` string. Whitespace is ignored.
    pub fn parse_binary(s: &str) -> Option<Self> {
        s.chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(Self)
    }

    /// Hex digits, four bits each.
    pub fn from_hex(s: &str) -> Result<Self, HexError> {
        let mut bits = Vec::with_capacity(s.len() * 4);
        for c in s.chars() {
            let v = c.to_digit(16).ok_or(HexError::InvalidDigit(c))?;
            bits.extend((0..4).rev().map(|i| v >> i & 1 == 1));
        }
        Ok(Self(bits))
    }

    /// Lowercase hex, left-padded with zero bits to a multiple of four.
    pub fn to_hex(&self) -> String {
        let pad = (4 - self.0.len() % 4) % 4;
        let padded: Vec<bool> = std::iter::repeat_n(false, pad)
            .chain(self.0.iter().copied())
            .collect();
        padded
            .chunks(4)
            .map(|nib| {
                let v = nib.iter().fold(0u32, |acc, &b| acc << 1 | b as u32);
                char::from_digit(v, 16).unwrap()
            })
            .collect()
    }
}

impl From<Vec<bool>> for BitString {
    fn from(bits: Vec<bool>) -> Self {
        Self(bits)
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Payload to hide. Assumed already encrypted, so its bits look uniform.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct BitMessage {
    bits: BitString,
}

impl BitMessage {
    pub fn new(bits: BitString) -> Self {
        Self { bits }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_hex(s: &str) -> Result<Self, HexError> {
        BitString::from_hex(s).map(Self::new)
    }

    pub fn from_bytes(bytes: &[u8]) -> Self {
        let bits = bytes
            .iter()
            .flat_map(|&b| (0..8).rev().map(move |i| b >> i & 1 == 1))
            .collect::<Vec<_>>();
        Self::new(bits.into())
    }

    pub fn bits(&self) -> &BitString {
        &self.bits
    }

    pub fn length_bits(&self) -> usize {
        self.bits.len()
    }

    pub fn to_hex(&self) -> String {
        self.bits.to_hex()
    }
}
