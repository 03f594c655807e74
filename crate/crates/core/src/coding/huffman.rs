//! Canonical Huffman codes over candidate pools.
//!
//! Code lengths come from ordinary Huffman merging with a fixed total order
//! on queue nodes: `(weight, rank)`, where a leaf's rank is its token id and
//! an internal node takes the smaller rank of its two children. Ranks stay
//! unique within the queue because subtrees are disjoint, so the merge
//! sequence is fully determined by the pool.
//!
//! Bit patterns are then assigned canonically from the lengths alone (sort by
//! length, then token id; consecutive codewords count upward), which makes
//! them independent of tree shape.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::bits::BitString;
use super::framing::FramedStream;
use super::CodingError;
use crate::distribution::TokenId;
use crate::pooling::CandidatePool;

#[derive(Debug, Clone, Copy)]
struct QueueNode {
    weight: f64,
    rank: TokenId,
    index: usize,
}

impl PartialEq for QueueNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for QueueNode {}

impl Ord for QueueNode {
    // Reversed so that BinaryHeap pops the smallest (weight, rank).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .weight
            .total_cmp(&self.weight)
            .then(other.rank.cmp(&self.rank))
    }
}

impl PartialOrd for QueueNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Huffman code lengths for `(token, weight)` pairs, in input order.
pub fn code_lengths(symbols: &[(TokenId, f64)]) -> Vec<usize> {
    let n = symbols.len();
    if n <= 1 {
        return vec![0; n];
    }
    let mut parent = vec![usize::MAX; 2 * n - 1];
    let mut heap: BinaryHeap<QueueNode> = symbols
        .iter()
        .enumerate()
        .map(|(index, &(rank, weight))| QueueNode {
            weight,
            rank,
            index,
        })
        .collect();
    let mut next = n;
    while heap.len() > 1 {
        let a = heap.pop().unwrap();
        let b = heap.pop().unwrap();
        parent[a.index] = next;
        parent[b.index] = next;
        heap.push(QueueNode {
            weight: a.weight + b.weight,
            rank: a.rank.min(b.rank),
            index: next,
        });
        next += 1;
    }
    // Parents always have larger indices than their children.
    let root = next - 1;
    let mut depth = vec![0usize; 2 * n - 1];
    for i in (0..root).rev() {
        depth[i] = depth[parent[i]] + 1;
    }
    depth.truncate(n);
    depth
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TrieNode {
    Branch([usize; 2]),
    Leaf(usize),
}

/// Prefix-free codeword table for one candidate pool.
#[derive(Debug, Clone, PartialEq)]
pub struct HuffmanCode {
    /// Sorted by (codeword length, token id).
    codewords: Vec<(TokenId, BitString)>,
    trie: Vec<TrieNode>,
}

impl HuffmanCode {
    /// Canonical code from explicit `(token, length)` pairs. Lengths must
    /// describe a complete prefix code (or a single zero-length word).
    pub fn from_lengths(lengths: &[(TokenId, usize)]) -> Self {
        let mut order: Vec<(TokenId, usize)> = lengths.to_vec();
        order.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));

        let mut codewords = Vec::with_capacity(order.len());
        let mut current: Option<BitString> = None;
        for &(token, len) in &order {
            let code = match current.take() {
                None => BitString::zeros(len),
                Some(mut prev) => {
                    let grow = len - prev.len();
                    let carried = prev.increment();
                    debug_assert!(carried, "code lengths over-subscribe the Kraft sum");
                    for _ in 0..grow {
                        prev.push(false);
                    }
                    prev
                }
            };
            current = Some(code.clone());
            codewords.push((token, code));
        }

        let mut trie = vec![TrieNode::Branch([0, 0])];
        if codewords.len() == 1 && codewords[0].1.is_empty() {
            trie[0] = TrieNode::Leaf(0);
        } else {
            for (slot, (_, code)) in codewords.iter().enumerate() {
                let mut node = 0;
                for (depth, &bit) in code.bits().iter().enumerate() {
                    let last = depth + 1 == code.len();
                    let TrieNode::Branch(children) = trie[node] else {
                        unreachable!("codeword extends past a leaf");
                    };
                    let child = children[bit as usize];
                    if child != 0 {
                        node = child;
                        continue;
                    }
                    let created = trie.len();
                    trie.push(if last {
                        TrieNode::Leaf(slot)
                    } else {
                        TrieNode::Branch([0, 0])
                    });
                    if let TrieNode::Branch(ref mut c) = trie[node] {
                        c[bit as usize] = created;
                    }
                    node = created;
                }
            }
        }
        Self { codewords, trie }
    }

    pub fn codewords(&self) -> &[(TokenId, BitString)] {
        &self.codewords
    }

    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    pub fn codeword(&self, token: TokenId) -> Option<&BitString> {
        self.codewords
            .iter()
            .find(|(t, _)| *t == token)
            .map(|(_, c)| c)
    }

    pub fn max_len(&self) -> usize {
        self.codewords
            .iter()
            .map(|(_, c)| c.len())
            .max()
            .unwrap_or(0)
    }

    /// Exact Kraft equality check, carried level by level so it holds for
    /// arbitrarily deep codes.
    pub fn is_complete(&self) -> bool {
        if self.codewords.len() == 1 {
            return self.codewords[0].1.is_empty();
        }
        let max = self.max_len();
        let mut count = vec![0u64; max + 1];
        for (_, c) in &self.codewords {
            count[c.len()] += 1;
        }
        if count[0] != 0 {
            return false;
        }
        let mut carry = 0u64;
        for d in (1..=max).rev() {
            let at_level = count[d] + carry;
            if !at_level.is_multiple_of(2) {
                return false;
            }
            carry = at_level / 2;
        }
        carry == 1
    }

    /// Looks up the unique codeword that prefixes the stream's unread bits.
    fn match_prefix(&self, stream: &FramedStream) -> (TokenId, usize) {
        let mut node = 0;
        let mut read = 0;
        loop {
            match self.trie[node] {
                TrieNode::Leaf(slot) => return (self.codewords[slot].0, read),
                TrieNode::Branch(children) => {
                    node = children[stream.peek(read) as usize];
                    debug_assert_ne!(node, 0, "incomplete code");
                    read += 1;
                }
            }
        }
    }
}

/// Builds the canonical Huffman code for a pool. A singleton pool gets the
/// empty codeword.
pub fn build_canonical_huffman(pool: &CandidatePool) -> HuffmanCode {
    let lengths = code_lengths(pool.entries());
    let pairs: Vec<_> = pool.tokens().zip(lengths).collect();
    HuffmanCode::from_lengths(&pairs)
}

/// Picks the token whose codeword prefixes the stream (zero-padded past its
/// end) and advances the stream past it.
pub fn embed_step(code: &HuffmanCode, stream: &mut FramedStream) -> (TokenId, usize) {
    let (token, consumed) = code.match_prefix(stream);
    stream.advance(consumed);
    (token, consumed)
}

/// Codeword of `token`; fails if the token is not in the pool.
pub fn decode_step(code: &HuffmanCode, token: TokenId) -> Result<&BitString, CodingError> {
    code.codeword(token)
        .ok_or(CodingError::TokenNotInPool(token))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding::bits::BitMessage;

    fn pool(v: &[(u32, f64)]) -> CandidatePool {
        CandidatePool::from_sorted(v.iter().map(|&(t, p)| (TokenId(t), p)).collect()).unwrap()
    }

    fn table(code: &HuffmanCode) -> Vec<(u32, String)> {
        let mut v: Vec<_> = code
            .codewords()
            .iter()
            .map(|(t, c)| (t.0, c.to_string()))
            .collect();
        v.sort();
        v
    }

    fn stream(bits: &str) -> FramedStream {
        FramedStream::raw(BitString::parse_binary(bits).unwrap())
    }

    #[test]
    fn textbook_three() {
        let code = build_canonical_huffman(&pool(&[(0, 0.5), (1, 0.25), (2, 0.25)]));
        assert_eq!(
            table(&code),
            vec![(0, "0".into()), (1, "10".into()), (2, "11".into())]
        );
        assert!(code.is_complete());
    }

    #[test]
    fn four_symbol_skewed() {
        let code = build_canonical_huffman(&pool(&[(0, 0.4), (1, 0.3), (2, 0.2), (3, 0.1)]));
        assert_eq!(
            table(&code),
            vec![
                (0, "0".into()),
                (1, "10".into()),
                (2, "110".into()),
                (3, "111".into())
            ]
        );
    }

    #[test]
    fn singleton_is_empty() {
        let code = build_canonical_huffman(&pool(&[(0, 1.0)]));
        assert_eq!(table(&code), vec![(0, String::new())]);
        assert!(code.is_complete());
        let mut s = stream("1111");
        assert_eq!(embed_step(&code, &mut s), (TokenId(0), 0));
        assert_eq!(s.cursor(), 0);
    }

    #[test]
    fn rank_breaks_weight_ties() {
        // Equal weights: ids 3 and 5 merge first (lowest ranks), then 7 joins.
        let code = build_canonical_huffman(&pool(&[(3, 0.25), (5, 0.25), (7, 0.25), (9, 0.25)]));
        assert_eq!(
            table(&code),
            vec![
                (3, "00".into()),
                (5, "01".into()),
                (7, "10".into()),
                (9, "11".into())
            ]
        );
        let lens = code_lengths(&[
            (TokenId(1), 0.4),
            (TokenId(0), 0.2),
            (TokenId(2), 0.2),
            (TokenId(3), 0.2),
        ]);
        // 0 and 2 merge first (ranks 0 < 2 < 3). Token 3 then pairs with that
        // 0.4 node, whose rank 0 beats token 1's rank among the 0.4 weights.
        assert_eq!(lens, vec![1, 3, 3, 2]);
    }

    #[test]
    fn embed_examples() {
        let code = HuffmanCode::from_lengths(&[(TokenId(0), 1), (TokenId(1), 2), (TokenId(2), 2)]);
        let mut s = stream("110");
        assert_eq!(embed_step(&code, &mut s), (TokenId(2), 2));
        assert_eq!(s.cursor(), 2);

        let binary = HuffmanCode::from_lengths(&[(TokenId(0), 1), (TokenId(1), 1)]);
        let mut empty = FramedStream::raw(BitString::new());
        assert_eq!(embed_step(&binary, &mut empty), (TokenId(0), 1));
    }

    #[test]
    fn decode_examples() {
        let code = HuffmanCode::from_lengths(&[(TokenId(0), 1), (TokenId(1), 2), (TokenId(2), 2)]);
        assert_eq!(decode_step(&code, TokenId(1)).unwrap().to_string(), "10");
        let single = HuffmanCode::from_lengths(&[(TokenId(0), 0)]);
        assert!(decode_step(&single, TokenId(0)).unwrap().is_empty());
        let binary = HuffmanCode::from_lengths(&[(TokenId(0), 1), (TokenId(1), 1)]);
        assert_eq!(
            decode_step(&binary, TokenId(5)),
            Err(CodingError::TokenNotInPool(TokenId(5)))
        );
    }

    #[test]
    fn deep_codes_stay_complete() {
        // Dyadic weights give a maximally skewed tree of depth n - 1.
        let entries: Vec<_> = (0..100u32)
            .map(|i| (TokenId(i), 0.5f64.powi(i as i32 + 1)))
            .collect();
        let code = build_canonical_huffman(&CandidatePool::from_sorted(entries).unwrap());
        assert_eq!(code.max_len(), 99);
        assert!(code.is_complete());
        let mut s = FramedStream::raw(
            BitMessage::from_hex(&"f".repeat(30))
                .unwrap()
                .bits()
                .clone(),
        );
        let (tok, used) = embed_step(&code, &mut s);
        assert_eq!((tok, used), (TokenId(99), 99));
    }
}
