use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Document;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<bos>", "<eos>"];

/// Token/index bijection with four reserved entries at the front.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds from the full index→token list, reserved entries included.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(Error::precondition("vocabulary must start with the reserved tokens"));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::precondition(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Index of `token`, or UNK.
    pub fn index(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.index(t)).collect()
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Self::from_tokens(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

/// Ranks sentence and summary tokens by frequency (ties lexicographic) and
/// keeps as many as fit in `cap` entries after the reserved ones.
pub fn build_vocab(docs: &[Document], cap: usize) -> Vocabulary {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for doc in docs {
        let summary = doc.summary.iter().flatten();
        for sentence in doc.sentences.iter().chain(summary) {
            for t in sentence {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
    }
    for r in RESERVED {
        counts.remove(r);
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let room = cap.saturating_sub(RESERVED.len());
    let tokens = RESERVED
        .iter()
        .map(|s| s.to_string())
        .chain(ranked.into_iter().take(room).map(|(t, _)| t.to_owned()))
        .collect();
    Vocabulary::from_tokens(tokens).expect("ranked tokens are distinct")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(tokens: &[&str]) -> Document {
        Document::new("d", vec![tokens.iter().map(|s| s.to_string()).collect()])
    }

    #[test]
    fn frequency_ranking() {
        let docs = [doc(&["a", "b", "a", "a"])];
        let v = build_vocab(&docs, 6);
        assert_eq!(v.index("a"), 4);
        assert_eq!(v.index("b"), 5);
        assert_eq!(v.len(), 6);
    }

    #[test]
    fn cap_drops_rare_tokens() {
        let docs = [doc(&["a", "b", "a", "a"])];
        let v = build_vocab(&docs, 5);
        assert_eq!(v.index("a"), 4);
        assert_eq!(v.index("b"), UNK);
    }

    #[test]
    fn ties_are_lexicographic() {
        let docs = [doc(&["y", "x"])];
        let v = build_vocab(&docs, 10);
        assert!(v.index("x") < v.index("y"));
    }

    #[test]
    fn round_trip_non_reserved() {
        let docs = [doc(&["p", "q", "r", "q"])];
        let v = build_vocab(&docs, 100);
        for i in RESERVED.len()..v.len() {
            assert_eq!(v.index(v.token(i).unwrap()), i);
        }
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn rejects_malformed_token_lists() {
        assert!(Vocabulary::from_tokens(vec!["a".into()]).is_err());
        let mut t: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        t.push("a".into());
        t.push("a".into());
        assert!(Vocabulary::from_tokens(t).is_err());
    }
}
