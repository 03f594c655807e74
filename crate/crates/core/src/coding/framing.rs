//! Length-prefixed framing: a 32-bit big-endian payload length, then the
//! payload, then an implicit run of zero bits.

use super::bits::{BitMessage, BitString};
use super::CodingError;

pub const HEADER_BITS: usize = 32;

/// Framed payload with a read cursor. Reads past the end yield zeros.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FramedStream {
    bits: BitString,
    cursor: usize,
}

impl FramedStream {
    /// Unframed stream over arbitrary bits, mostly useful in tests.
    pub fn raw(bits: BitString) -> Self {
        Self { bits, cursor: 0 }
    }

    pub fn peek(&self, offset: usize) -> bool {
        self.bits
            .bits()
            .get(self.cursor + offset)
            .copied()
            .unwrap_or(false)
    }

    pub fn advance(&mut self, n: usize) {
        self.cursor += n;
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    /// Length of header plus payload, excluding padding.
    pub fn framed_len(&self) -> usize {
        self.bits.len()
    }

    pub fn remaining(&self) -> usize {
        self.bits.len().saturating_sub(self.cursor)
    }

    pub fn is_exhausted(&self) -> bool {
        self.cursor >= self.bits.len()
    }
}

pub(crate) fn header_value(payload_bits: usize) -> Result<u32, CodingError> {
    u32::try_from(payload_bits).map_err(|_| CodingError::MessageTooLong(payload_bits))
}

pub fn frame(payload: &BitMessage) -> Result<FramedStream, CodingError> {
    let len = header_value(payload.length_bits())?;
    let mut bits = BitString::new();
    for i in (0..HEADER_BITS).rev() {
        bits.push(len >> i & 1 == 1);
    }
    bits.extend_from(payload.bits());
    Ok(FramedStream::raw(bits))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Deframed {
    Complete(BitMessage),
    NeedMore,
}

impl Deframed {
    pub fn is_complete(&self) -> bool {
        matches!(self, Deframed::Complete(_))
    }
}

/// Total framed length announced by the header, once it is available.
pub fn announced_len(accumulated: &[bool]) -> Option<usize> {
    if accumulated.len() < HEADER_BITS {
        return None;
    }
    let len = accumulated[..HEADER_BITS]
        .iter()
        .fold(0u64, |acc, &b| acc << 1 | b as u64);
    Some(HEADER_BITS + len as usize)
}

/// Recovers the payload once header and payload bits are present; surplus
/// bits are ignored.
pub fn deframe(accumulated: &[bool]) -> Deframed {
    match announced_len(accumulated) {
        Some(total) if accumulated.len() >= total => Deframed::Complete(BitMessage::new(
            accumulated[HEADER_BITS..total].to_vec().into(),
        )),
        _ => Deframed::NeedMore,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let s = frame(&BitMessage::from_hex("a5").unwrap()).unwrap();
        assert_eq!(
            s.bits.to_string(),
            "00000000000000000000000000001000".to_owned() + "10100101"
        );
        assert_eq!(s.framed_len(), 40);
    }

    #[test]
    fn deframe_needs_header() {
        assert_eq!(deframe(&[false; 31]), Deframed::NeedMore);
        let zero_len = deframe(&[false; 32]);
        assert_eq!(zero_len, Deframed::Complete(BitMessage::empty()));
    }

    #[test]
    fn deframe_ignores_surplus() {
        let mut acc = frame(&BitMessage::new(BitString::parse_binary("101").unwrap()))
            .unwrap()
            .bits
            .bits()
            .to_vec();
        assert_eq!(deframe(&acc[..34]), Deframed::NeedMore);
        acc.extend([false, false, true, false]);
        assert_eq!(
            deframe(&acc),
            Deframed::Complete(BitMessage::new(BitString::parse_binary("101").unwrap()))
        );
    }

    #[test]
    fn padding_reads_as_zero() {
        let mut s = FramedStream::raw(BitString::parse_binary("1").unwrap());
        assert!(s.peek(0));
        assert!(!s.peek(1));
        s.advance(3);
        assert!(s.is_exhausted());
        assert!(!s.peek(0));
    }

    #[test]
    fn too_long() {
        assert_eq!(header_value(u32::MAX as usize), Ok(u32::MAX));
        if usize::BITS > 32 {
            let n = u32::MAX as usize + 1;
            assert_eq!(header_value(n), Err(CodingError::MessageTooLong(n)));
        }
    }

    proptest! {
        #[test]
        fn frame_then_deframe(bits in prop::collection::vec(any::<bool>(), 0..300), extra in 0usize..16) {
            let msg = BitMessage::new(bits.into());
            let s = frame(&msg).unwrap();
            let mut acc = s.bits.bits().to_vec();
            acc.extend(std::iter::repeat_n(false, extra));
            prop_assert_eq!(deframe(&acc), Deframed::Complete(msg));
            prop_assert_eq!(deframe(&acc[..s.framed_len() - 1]), Deframed::NeedMore);
        }
    }
}
