//! Tokenization and vocabulary construction.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;

pub const PAD_TOKEN: &str = "<pad>";
pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";
pub const UNK_TOKEN: &str = "<unk>";
/// Turn separator used when flattening dialogue history for seq2seq models.
pub const SEP_TOKEN: &str = "<sep>";

/// Lowercase, split on whitespace, and split `. ? ! ,` into standalone tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for ch in chunk.to_lowercase().chars() {
            if matches!(ch, '.' | '?' | '!' | ',') {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(ch.to_string());
            } else {
                word.push(ch);
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

/// Token <-> id bijection with fixed reserved ids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Deterministic construction: reserved tokens first, then corpus tokens
    /// ordered by descending count with alphabetical tie-break. Tokens seen
    /// fewer than `min_count` times are left out and encode to UNK.
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a [String]>, min_count: usize) -> Result<Self> {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut any = false;
        for sent in corpus {
            any = true;
            for tok in sent {
                *counts.entry(tok.as_str()).or_insert(0) += 1;
            }
        }
        if !any {
            return Err(Error::EmptyCorpus);
        }
        let mut ordered: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_count.max(1) && !is_reserved(t))
            .collect();
        ordered.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut tokens: Vec<String> = [PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN]
            .iter()
            .map(|s| s.to_string())
            .collect();
        tokens.extend(ordered.into_iter().map(|(t, _)| t.to_string()));
        Ok(Self::from_tokens(tokens))
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary { tokens, index }
    }

    /// Rebuild the lookup index after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
    }

    /// Append an always-present extra token (e.g. the `<sep>` separator)
    /// after the corpus-derived entries. Returns its id.
    pub fn add_special(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn encode(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn encode_all(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.encode(t)).collect()
    }

    pub fn decode(&self, id: u32) -> &str {
        self.tokens
            .get(id as usize)
            .map(|s| s.as_str())
            .unwrap_or_else(|| panic!("token id {id} out of range for vocab of {}", self.len()))
    }

    pub fn decode_all(&self, ids: &[u32]) -> Vec<String> {
        ids.iter().map(|&id| self.decode(id).to_string()).collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

fn is_reserved(tok: &str) -> bool {
    matches!(tok, PAD_TOKEN | BOS_TOKEN | EOS_TOKEN | UNK_TOKEN)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(|t| t.to_string()).collect()
    }

    #[test]
    fn tokenize_splits_punctuation() {
        assert_eq!(tokenize("Still hot latte?"), toks("still hot latte ?"));
        assert_eq!(tokenize(""), Vec::<String>::new());
        assert_eq!(tokenize("a  b"), toks("a b"));
        assert_eq!(tokenize("a.b, c!"), toks("a . b , c !"));
    }

    #[test]
    fn build_orders_by_count_then_alpha() {
        let corpus = [toks("a b"), toks("a")];
        let v = Vocabulary::build(corpus.iter().map(|s| s.as_slice()), 1).unwrap();
        assert_eq!(v.encode("a"), 4);
        assert_eq!(v.encode("b"), 5);
        assert_eq!(v.encode("zzz"), UNK);
        assert_eq!(v.encode(EOS_TOKEN), EOS);
    }

    #[test]
    fn min_count_maps_rare_tokens_to_unk() {
        let corpus = [toks("a a rare")];
        let v = Vocabulary::build(corpus.iter().map(|s| s.as_slice()), 2).unwrap();
        assert_eq!(v.encode("a"), 4);
        assert_eq!(v.encode("rare"), UNK);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let corpus: [Vec<String>; 0] = [];
        assert!(Vocabulary::build(corpus.iter().map(|s| s.as_slice()), 1).is_err());
    }

    #[test]
    fn special_token_appends_after_corpus_entries() {
        let corpus = [toks("a b")];
        let mut v = Vocabulary::build(corpus.iter().map(|s| s.as_slice()), 1).unwrap();
        let sep = v.add_special(SEP_TOKEN);
        assert_eq!(sep, 6);
        assert_eq!(v.add_special(SEP_TOKEN), 6);
        assert_eq!(v.decode(sep), SEP_TOKEN);
    }

    #[test]
    fn construction_is_deterministic() {
        let corpus = [toks("x y z z q"), toks("y z")];
        let a = Vocabulary::build(corpus.iter().map(|s| s.as_slice()), 1).unwrap();
        let b = Vocabulary::build(corpus.iter().map(|s| s.as_slice()), 1).unwrap();
        assert_eq!(a.tokens(), b.tokens());
    }
}
