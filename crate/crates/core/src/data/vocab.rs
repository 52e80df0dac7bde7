use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const MASK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;
pub const UNK: u32 = 4;

/// Surface forms of the reserved ids, indexed by id.
pub const RESERVED: [&str; 5] = ["[PAD]", "[MASK]", "[CLS]", "[SEP]", "[UNK]"];

pub const MAX_VOCAB: usize = 4096;

/// Word-level vocabulary. Ids `0..5` are always the reserved tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds a vocabulary from word lists, assigning ids in first-seen order.
    pub fn build<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab = Self::reserved_only();
        for w in words {
            vocab.insert(w.as_ref())?;
        }
        Ok(vocab)
    }

    /// Builds a vocabulary over every word appearing in `texts`.
    pub fn from_texts<I, S>(texts: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab = Self::reserved_only();
        for t in texts {
            for w in super::words(t.as_ref()) {
                vocab.insert(&w)?;
            }
        }
        Ok(vocab)
    }

    fn reserved_only() -> Self {
        let tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Self { tokens, index }
    }

    fn insert(&mut self, word: &str) -> Result<u32> {
        if let Some(&id) = self.index.get(word) {
            return Ok(id);
        }
        if self.tokens.len() >= MAX_VOCAB {
            return Err(Error::Config(format!("vocabulary exceeds {MAX_VOCAB} tokens")));
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(word.to_string());
        self.index.insert(word.to_string(), id);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Id of `word`, or `UNK`.
    pub fn id(&self, word: &str) -> u32 {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn get(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(Error::Config("vocabulary must start with the reserved tokens".into()));
        }
        let n = tokens.len();
        let vocab = Self::build(tokens.into_iter().skip(RESERVED.len()))?;
        if vocab.len() != n {
            return Err(Error::Config("vocabulary contains duplicate tokens".into()));
        }
        Ok(vocab)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_are_fixed() {
        let v = Vocabulary::from_texts(["zebra apple", "[MASK] cat"]).unwrap();
        assert_eq!(v.id("[PAD]"), PAD);
        assert_eq!(v.id("[MASK]"), MASK);
        assert_eq!(v.id("[CLS]"), CLS);
        assert_eq!(v.id("[SEP]"), SEP);
        assert_eq!(v.id("[UNK]"), UNK);
        assert_eq!(v.id("zebra"), 5);
        assert_eq!(v.id("apple"), 6);
        assert_eq!(v.id("cat"), 7);
        assert_eq!(v.id("missing"), UNK);
        assert_eq!(v.len(), 8);
    }

    #[test]
    fn bijective_over_tokens() {
        let v = Vocabulary::from_texts(["a b c a b d"]).unwrap();
        for (i, t) in v.tokens().iter().enumerate() {
            assert_eq!(v.id(t), i as u32);
            assert_eq!(v.token(i as u32), Some(t.as_str()));
        }
    }

    #[test]
    fn size_limit_enforced() {
        let words: Vec<String> = (0..MAX_VOCAB).map(|i| format!("w{i}")).collect();
        assert!(Vocabulary::build(&words).is_err());
        assert!(Vocabulary::build(&words[..MAX_VOCAB - RESERVED.len()]).is_ok());
    }

    #[test]
    fn serde_roundtrip() {
        let v = Vocabulary::from_texts(["one two three"]).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        assert!(serde_json::from_str::<Vocabulary>("[\"x\"]").is_err());
    }
}
