use serde::{Deserialize, Serialize};

use super::vocab::{Vocabulary, CLS, MASK, RESERVED, SEP};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_LEN: usize = 128;

/// Token ids wrapped as `CLS … SEP`, with the indices of every `MASK` id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    ids: Vec<u32>,
    mask_positions: Vec<usize>,
}

impl TokenSequence {
    /// Wraps raw ids; they must already begin with `CLS` and end with `SEP`.
    pub fn from_ids(ids: Vec<u32>, max_len: usize) -> Result<Self> {
        if ids.len() > max_len {
            return Err(Error::Truncation { len: ids.len(), max: max_len });
        }
        if ids.first() != Some(&CLS) || ids.last() != Some(&SEP) || ids.len() < 2 {
            return Err(Error::Shape("token sequence must be wrapped as [CLS] ... [SEP]".into()));
        }
        let mask_positions =
            ids.iter().enumerate().filter(|(_, &id)| id == MASK).map(|(i, _)| i).collect();
        Ok(Self { ids, mask_positions })
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn mask_positions(&self) -> &[usize] {
        &self.mask_positions
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Copy with the listed positions replaced by `MASK`.
    pub fn with_masks(&self, positions: &[usize]) -> Self {
        let mut ids = self.ids.clone();
        for &p in positions {
            ids[p] = MASK;
        }
        let mask_positions =
            ids.iter().enumerate().filter(|(_, &id)| id == MASK).map(|(i, _)| i).collect();
        Self { ids, mask_positions }
    }
}

/// Splits text into lowercase word and punctuation tokens. The literal
/// reserved forms (`[MASK]`, `[SEP]`, ...) survive as single tokens.
pub fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut rest = text;
    while let Some(c) = rest.chars().next() {
        if c == '[' {
            if let Some(tok) = RESERVED.iter().find(|r| rest.starts_with(**r)) {
                flush(&mut current, &mut out);
                out.push(tok.to_string());
                rest = &rest[tok.len()..];
                continue;
            }
        }
        if c.is_whitespace() {
            flush(&mut current, &mut out);
        } else if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else {
            flush(&mut current, &mut out);
            out.push(c.to_string());
        }
        rest = &rest[c.len_utf8()..];
    }
    flush(&mut current, &mut out);
    out
}

fn flush(current: &mut String, out: &mut Vec<String>) {
    if !current.is_empty() {
        out.push(std::mem::take(current));
    }
}

/// Canonical text form: tokens joined by single spaces.
pub fn normalize(text: &str) -> String {
    words(text).join(" ")
}

pub fn tokenize(text: &str, vocab: &Vocabulary, max_len: usize) -> Result<TokenSequence> {
    let mut ids = Vec::with_capacity(16);
    ids.push(CLS);
    ids.extend(words(text).iter().map(|w| vocab.id(w)));
    ids.push(SEP);
    TokenSequence::from_ids(ids, max_len)
}

/// Inverse of [`tokenize`] up to normalization; the outer `CLS`/`SEP` are dropped.
pub fn decode(seq: &TokenSequence, vocab: &Vocabulary) -> String {
    let ids = seq.ids();
    let inner = &ids[1..ids.len() - 1];
    inner.iter().map(|&id| vocab.token(id).unwrap_or(RESERVED[4])).collect::<Vec<_>>().join(" ")
}
