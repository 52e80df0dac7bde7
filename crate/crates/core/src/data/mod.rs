//! Tokenization, dataset files and the planted-knowledge synthetic world.

mod jsonl;
mod tokenize;
mod vocab;
mod world;

pub use jsonl::{load_jsonl, parse_jsonl, save_jsonl, to_jsonl};
pub use tokenize::{decode, normalize, tokenize, words, TokenSequence, DEFAULT_MAX_LEN};
pub use vocab::{Vocabulary, CLS, MASK, MAX_VOCAB, PAD, RESERVED, SEP, UNK};
pub use world::{
    fact_sentence, generate_world, question_text, Fact, Split, SyntheticWorld, WorldParams,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One multiple-choice question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqInstance {
    #[serde(default)]
    pub context: String,
    pub question: String,
    pub choices: Vec<String>,
    pub gold: usize,
    #[serde(default)]
    pub source_id: String,
}

impl McqInstance {
    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| {
            Err(Error::InvalidInstance { source_id: self.source_id.clone(), message })
        };
        if !(2..=5).contains(&self.choices.len()) {
            return fail(format!("expected 2 to 5 choices, found {}", self.choices.len()));
        }
        if self.gold >= self.choices.len() {
            return fail(format!(
                "gold index {} out of range for {} choices",
                self.gold,
                self.choices.len()
            ));
        }
        Ok(())
    }
}
