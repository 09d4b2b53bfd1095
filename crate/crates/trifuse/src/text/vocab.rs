//! Token vocabulary with reserved ids.
//!
//! Ids 0, 1, 2 are always PAD, CLS, UNK. Real tokens start at id 3 and
//! are retained by corpus frequency (ties broken lexicographically). The
//! file format is one token per line; the token on 0-based line `i` has
//! id `i + 3`, so the reserved ids never appear in the file.

use crate::error::{Error, Result};
use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

pub const PAD_ID: usize = 0;
pub const CLS_ID: usize = 1;
pub const UNK_ID: usize = 2;
const RESERVED: usize = 3;

/// Printable stand-ins for the reserved ids; `encode` maps them back, so
/// encode∘decode is the identity on every id including the reserved ones.
const RESERVED_TOKENS: [&str; 3] = ["<pad>", "<cls>", "<unk>"];

#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds a vocabulary from an iterator of already-tokenized texts.
    /// `max_size` is the total id count including the three reserved ids.
    pub fn build<'a, I>(corpus: I, max_size: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        if max_size < RESERVED {
            return Err(Error::parameter(
                "Vocab::build",
                format!("max_size {max_size} cannot hold the {RESERVED} reserved ids"),
            ));
        }
        // BTreeMap gives the lexicographic order needed for tie-breaking.
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for text in corpus {
            for token in text {
                *counts.entry(token.as_str()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size - RESERVED);
        Ok(Self::from_tokens(
            ranked.into_iter().map(|(t, _)| t.to_string()).collect(),
        ))
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i + RESERVED))
            .collect();
        Vocab { tokens, index }
    }

    /// The non-reserved tokens in id order; feeding them back through
    /// [`Vocab::from_ordered_tokens`] reproduces the identical mapping.
    pub fn ordered_tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Rebuilds a vocabulary from non-reserved tokens in id order (no
    /// frequency re-ranking, unlike [`Vocab::build`]).
    pub fn from_ordered_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for token in &tokens {
            if token.is_empty() || token.chars().any(char::is_whitespace) {
                return Err(Error::parameter(
                    "Vocab::from_ordered_tokens",
                    format!("token {token:?} is empty or contains whitespace"),
                ));
            }
            if RESERVED_TOKENS.contains(&token.as_str()) || !seen.insert(token.as_str()) {
                return Err(Error::parameter(
                    "Vocab::from_ordered_tokens",
                    format!("token {token:?} is reserved or repeated"),
                ));
            }
        }
        Ok(Self::from_tokens(tokens))
    }

    /// Total number of ids, reserved ones included.
    pub fn size(&self) -> usize {
        self.tokens.len() + RESERVED
    }

    /// The id of `token`, or UNK if it is out of vocabulary.
    pub fn encode(&self, token: &str) -> usize {
        if let Some(pos) = RESERVED_TOKENS.iter().position(|&r| r == token) {
            return pos;
        }
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn decode(&self, id: usize) -> Result<&str> {
        if id < RESERVED {
            return Ok(RESERVED_TOKENS[id]);
        }
        self.tokens
            .get(id - RESERVED)
            .map(String::as_str)
            .ok_or_else(|| {
                Error::parameter(
                    "Vocab::decode",
                    format!("id {id} out of range for size {}", self.size()),
                )
            })
    }

    pub fn encode_tokens(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.encode(t)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut body = self.tokens.join("\n");
        if !body.is_empty() {
            body.push('\n');
        }
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut tokens = Vec::new();
        for (i, line) in body.lines().enumerate() {
            if line.is_empty() {
                return Err(Error::parse(
                    path.display().to_string(),
                    format!("line {}: empty token", i + 1),
                ));
            }
            if line.chars().any(char::is_whitespace) {
                return Err(Error::parse(
                    path.display().to_string(),
                    format!("line {}: token {line:?} contains whitespace", i + 1),
                ));
            }
            tokens.push(line.to_string());
        }
        Ok(Self::from_tokens(tokens))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(texts: &[&str]) -> Vec<Vec<String>> {
        texts
            .iter()
            .map(|t| t.split_whitespace().map(str::to_string).collect())
            .collect()
    }

    fn build(texts: &[&str], max: usize) -> Vocab {
        let c = corpus(texts);
        Vocab::build(c.iter().map(|v| v.as_slice()), max).unwrap()
    }

    #[test]
    fn ordered_tokens_round_trip_reproduces_the_mapping() {
        let v = build(&["b b b a a c c zz"], 100);
        let back = Vocab::from_ordered_tokens(v.ordered_tokens().to_vec()).unwrap();
        assert_eq!(back.size(), v.size());
        for token in ["b", "a", "c", "zz", "unseen"] {
            assert_eq!(back.encode(token), v.encode(token), "{token}");
        }
        assert!(Vocab::from_ordered_tokens(vec!["x".into(), "x".into()]).is_err());
        assert!(Vocab::from_ordered_tokens(vec!["<pad>".into()]).is_err());
        assert!(Vocab::from_ordered_tokens(vec!["a b".into()]).is_err());
    }

    #[test]
    fn frequency_ranks_then_lexicographic_ties() {
        let v = build(&["b b b a a c c zz"], 100);
        // b (3) before a (2) and c (2); a before c by spelling; zz last.
        assert_eq!(v.encode("b"), 3);
        assert_eq!(v.encode("a"), 4);
        assert_eq!(v.encode("c"), 5);
        assert_eq!(v.encode("zz"), 6);
    }

    #[test]
    fn truncation_keeps_most_frequent_tokens() {
        let v = build(&["x x x y y z"], 5);
        assert_eq!(v.size(), 5);
        assert_eq!(v.encode("x"), 3);
        assert_eq!(v.encode("y"), 4);
        assert_eq!(v.encode("z"), UNK_ID);
    }

    #[test]
    fn empty_corpus_has_only_reserved_ids() {
        let v = build(&[], 100);
        assert_eq!(v.size(), 3);
        assert_eq!(v.encode("anything"), UNK_ID);
    }

    #[test]
    fn round_trip_holds_for_every_id() {
        let v = build(&["alpha beta gamma alpha"], 100);
        for id in 0..v.size() {
            let tok = v.decode(id).unwrap().to_string();
            assert_eq!(v.encode(&tok), id, "id {id} via token {tok:?}");
        }
        assert!(v.decode(v.size()).is_err());
    }

    #[test]
    fn file_round_trip_preserves_ids() {
        let v = build(&["one two two three three three"], 100);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        v.save(&path).unwrap();
        let loaded = Vocab::load(&path).unwrap();
        assert_eq!(loaded.size(), v.size());
        for id in 3..v.size() {
            assert_eq!(loaded.decode(id).unwrap(), v.decode(id).unwrap());
        }
        // Line i (0-based) carries id i+3.
        let body = std::fs::read_to_string(&path).unwrap();
        let first = body.lines().next().unwrap();
        assert_eq!(v.encode(first), 3);
    }

    #[test]
    fn build_rejects_sizes_below_the_reserved_block() {
        let c = corpus(&["a"]);
        assert!(Vocab::build(c.iter().map(|v| v.as_slice()), 2).is_err());
    }
}
