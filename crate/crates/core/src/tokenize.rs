//! Rule-based tokenizer for plain text.
//!
//! Tokens are split on whitespace, and punctuation is split off into tokens
//! of its own. Apostrophes, hyphens, periods and commas stay inside a token
//! when both neighbours are alphanumeric (`don't`, `3.5`, `well-known`).
//! A sentence ends at a terminal punctuation token followed by whitespace and
//! an uppercase letter or an ideograph; an ideographic full stop directly
//! followed by an ideograph also ends one.

use crate::corpus::Sentence;

const INNER_PUNCT: &[char] = &['.', ',', '\'', '\u{2019}', '-'];
const TERMINAL: &[&str] = &[".", "!", "?", "\u{3002}", "\u{ff01}", "\u{ff1f}"];

/// Ideographs and the CJK syllabaries.
pub fn is_ideograph(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30ff | 0x3400..=0x4dbf | 0x4e00..=0x9fff | 0xac00..=0xd7af
        | 0xf900..=0xfaff | 0x20000..=0x2ffff)
}

struct RawToken {
    text: String,
    space_before: bool,
}

fn split_tokens(text: &str) -> Vec<RawToken> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut current = String::new();
    let mut space_before = false;
    let mut current_space = false;
    let flush = |current: &mut String, space: bool, out: &mut Vec<RawToken>| {
        if !current.is_empty() {
            out.push(RawToken {
                text: std::mem::take(current),
                space_before: space,
            });
        }
    };
    for (i, &c) in chars.iter().enumerate() {
        if c.is_whitespace() {
            flush(&mut current, current_space, &mut out);
            space_before = true;
            continue;
        }
        if c.is_alphanumeric() {
            if current.is_empty() {
                current_space = space_before;
                space_before = false;
            }
            current.push(c);
            continue;
        }
        let prev_alnum = i > 0 && chars[i - 1].is_alphanumeric();
        let next_alnum = chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
        if INNER_PUNCT.contains(&c) && prev_alnum && next_alnum && !current.is_empty() {
            current.push(c);
            continue;
        }
        flush(&mut current, current_space, &mut out);
        out.push(RawToken {
            text: c.to_string(),
            space_before,
        });
        space_before = false;
    }
    flush(&mut current, current_space, &mut out);
    out
}

fn starts_sentence(token: &RawToken) -> bool {
    token
        .text
        .chars()
        .next()
        .is_some_and(|c| c.is_uppercase() || is_ideograph(c))
}

/// Splits plain text into tokenized sentences. Empty or whitespace-only input
/// yields no sentences.
pub fn tokenize_plain(text: &str) -> Vec<Sentence> {
    let tokens = split_tokens(text);
    let mut sentences = Vec::new();
    let mut current: Vec<String> = Vec::new();
    for (i, token) in tokens.iter().enumerate() {
        current.push(token.text.clone());
        let Some(next) = tokens.get(i + 1) else { break };
        if !TERMINAL.contains(&token.text.as_str()) {
            continue;
        }
        let spaced = next.space_before && starts_sentence(next);
        let ideographic = token.text == "\u{3002}"
            && next.text.chars().next().is_some_and(is_ideograph);
        if spaced || ideographic {
            sentences.push(Sentence::from_words(&current));
            current.clear();
        }
    }
    if !current.is_empty() {
        sentences.push(Sentence::from_words(&current));
    }
    sentences
}
