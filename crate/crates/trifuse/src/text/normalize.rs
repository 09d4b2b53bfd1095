//! Text normalization and whitespace tokenization.
//!
//! Normalization is canonical composition (NFC) — so decomposed and
//! precomposed spellings of the same word become identical — followed by
//! punctuation stripping and whitespace collapsing. Case is preserved,
//! and emoji pass through as ordinary tokens.

use unicode_normalization::UnicodeNormalization;

/// Punctuation beyond ASCII that is stripped alongside
/// `char::is_ascii_punctuation`. Covers common typographic marks and the
/// danda family of sentence terminators.
const EXTRA_PUNCTUATION: &[char] = &[
    '\u{2018}', '\u{2019}', '\u{201A}', '\u{201C}', '\u{201D}', '\u{201E}', // curly quotes
    '\u{00AB}', '\u{00BB}', '\u{2039}', '\u{203A}', // guillemets
    '\u{2026}', '\u{2013}', '\u{2014}', '\u{2015}', '\u{00B7}',
    '\u{2022}', // ellipsis, dashes, dots
    '\u{00A1}', '\u{00BF}', '\u{061F}', '\u{060C}', '\u{061B}', // inverted/Arabic marks
    '\u{0964}', '\u{0965}', // danda, double danda
    '\u{3001}', '\u{3002}', '\u{FF0C}', '\u{FF0E}', '\u{FF01}', '\u{FF1F}', // CJK/fullwidth
    '\u{FF1A}', '\u{FF1B}', '\u{FF08}', '\u{FF09}', '\u{300C}', '\u{300D}',
];

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation() || EXTRA_PUNCTUATION.contains(&c)
}

/// Applies NFC, removes punctuation, and collapses runs of whitespace to
/// single spaces (trimming the ends). Idempotent.
pub fn normalize_text(raw: &str) -> String {
    let composed: String = raw.nfc().filter(|&c| !is_punctuation(c)).collect();
    let mut out = String::with_capacity(composed.len());
    let mut in_space = true; // treat the start as after-space to trim leading runs
    for c in composed.chars() {
        if c.is_whitespace() {
            if !in_space {
                out.push(' ');
                in_space = true;
            }
        } else {
            out.push(c);
            in_space = false;
        }
    }
    if out.ends_with(' ') {
        out.pop();
    }
    out
}

/// Whitespace tokens of the normalized text.
pub fn tokenize(raw: &str) -> Vec<String> {
    normalize_text(raw)
        .split_whitespace()
        .map(str::to_string)
        .collect()
}
