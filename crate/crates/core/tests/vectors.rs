mod common;

use lingsteg::coding::{build_canonical_huffman, BitMessage};
use lingsteg::distribution::TokenId;
use lingsteg::metrics::perplexity;
use lingsteg::pipeline::{extract, hide, StepKind};

/// Tokens for payload `b4` over `vector.jsonl` at t_a = 0.01, t_r = 0.2,
/// computed by a separate encoder written from the canonical code rules.
const VECTOR_TOKENS: [u32; 37] = [
    1, 4, 2, 5, 3, 1, 4, 2, 5, 3, 1, 4, 2, 5, 3, 1, 4, 2, 5, 3, 1, 4, 2, 5, 3, 1, 4, 2, 1, 3, 1, 2,
    4, 5, 4, 1, 0,
];

#[test]
fn vector_file_pins_tokens() {
    let file = common::read_vector("vector.stego.json");
    assert_eq!(file.tokens, VECTOR_TOKENS);
    assert_eq!(file.token_strings.len(), VECTOR_TOKENS.len());
}

#[test]
fn vector_extracts_bit_exactly() {
    let file = common::read_vector("vector.stego.json");
    let params = file.params.to_params().unwrap();
    let mut session = file.open_session().unwrap();
    let msg = extract(&mut session, &file.token_ids(), &params).unwrap();
    assert_eq!(msg.to_hex(), "b4");
    assert_eq!(msg.length_bits(), 8);
}

#[test]
fn vector_rehides_identically() {
    let file = common::read_vector("vector.stego.json");
    let params = file.params.to_params().unwrap();
    let mut session = file.open_session().unwrap();
    let out = hide(&mut session, &BitMessage::from_hex("b4").unwrap(), &params).unwrap();
    assert_eq!(out.tokens, file.token_ids());
    assert_eq!(out.gross_bits, 40);
    assert_eq!(out.steps.last().unwrap().kind, StepKind::Tail);
}

#[test]
fn vector_first_steps_use_canonical_codewords() {
    let file = common::read_vector("vector.stego.json");
    let params = file.params.to_params().unwrap();
    let mut session = file.open_session().unwrap();
    let eos = session.eos_id();

    // Step 0 after EOS removal: 1:0.25 2:0.125 3:0.0625 4:0.03125 5:0.03125.
    // The pool keeps p > 0.05; lengths 1, 2, 2 give codes 0, 10, 11.
    let dist = session.next_distribution(None).unwrap();
    let code = build_canonical_huffman(&params.rule.pool(&dist, eos).unwrap());
    let words: Vec<(u32, String)> = code
        .codewords()
        .iter()
        .map(|(t, c)| (t.0, c.to_string()))
        .collect();
    assert_eq!(words, [(1, "0".into()), (2, "10".into()), (3, "11".into())]);

    // Step 1: 4:0.25 2:0.125 5:0.0625.
    let dist = session.next_distribution(Some(TokenId(1))).unwrap();
    let code = build_canonical_huffman(&params.rule.pool(&dist, eos).unwrap());
    let words: Vec<(u32, String)> = code
        .codewords()
        .iter()
        .map(|(t, c)| (t.0, c.to_string()))
        .collect();
    assert_eq!(words, [(4, "0".into()), (2, "10".into()), (5, "11".into())]);
}

#[test]
fn halves_file_scores_two() {
    let file = common::read_vector("halves.stego.json");
    let mut session = file.open_session().unwrap();
    assert_eq!(perplexity(&mut session, &file.token_ids()).unwrap(), 2.0);
}
