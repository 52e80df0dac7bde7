//! Nearest-neighbour interpretation of knowledge vectors over a sentence
//! corpus and templated triples.

mod index;
mod interpret;

pub use index::{Hit, IndexMode, PqParams, ProductQuantizer, VectorIndex};
pub use interpret::{interpret, InterpretReport, RetrievalHit, Section, SlotTokens, TokenProb};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backbone::{forward, EncoderParams, ForwardOptions};
use crate::data::{tokenize, Vocabulary};
use crate::error::{Error, Result};
use crate::rumination::KnowledgeVectors;
use crate::scalar::Scalar;
use crate::tape::Tape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntrySource {
    Corpus,
    Triple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry<T> {
    pub id: usize,
    pub source: EntrySource,
    pub text: String,
    pub embedding: Vec<T>,
}

/// Hidden state at the trailing `[MASK]` of `text + " [MASK]"`.
pub fn embed_entry<T: Scalar>(encoder: &EncoderParams<T>, vocab: &Vocabulary, text: &str) -> Result<Vec<T>> {
    let seq = tokenize(&format!("{text} [MASK]"), vocab, encoder.config().max_positions)?;
    let pos = *seq.mask_positions().last().ok_or(Error::NoMasks)?;
    let mut tape = Tape::new();
    let bound = encoder.bind(&mut tape, false);
    let trace = forward(&mut tape, &bound, &seq, ForwardOptions::default())?;
    Ok(tape.value(trace.hidden).row(pos).to_vec())
}

/// Arithmetic mean of the knowledge vectors.
pub fn embed_query<T: Scalar>(r: &KnowledgeVectors<T>) -> Result<Vec<T>> {
    if r.is_empty() {
        return Err(Error::Empty("knowledge vectors".into()));
    }
    Ok(r.vectors.mean_rows().into_data())
}

/// Sentence form of a knowledge triple. Unknown relations fall back to
/// `"{h} {rel} {t}"`.
pub fn template_triple(head: &str, relation: &str, tail: &str) -> String {
    let rel = relation.trim().to_lowercase();
    let text = match rel.as_str() {
        "isa" => format!("{head} is a kind of {tail}"),
        "atlocation" => format!("{head} can be in {tail}"),
        _ => format!("{head} {rel} {tail}"),
    };
    text.to_lowercase().trim_end_matches(['.', '!', '?', ' ']).to_string()
}

/// Embeds `texts` with `encoder` and assigns ids in input order.
pub fn embed_entries<T: Scalar>(
    encoder: &EncoderParams<T>,
    vocab: &Vocabulary,
    source: EntrySource,
    texts: &[String],
) -> Result<Vec<CorpusEntry<T>>> {
    texts
        .iter()
        .enumerate()
        .map(|(id, text)| {
            Ok(CorpusEntry { id, source, text: text.clone(), embedding: embed_entry(encoder, vocab, text)? })
        })
        .collect()
}

/// Entries plus the index built over their embeddings.
#[derive(Debug, Clone)]
pub struct RetrievalIndex<T> {
    pub entries: Vec<CorpusEntry<T>>,
    pub index: VectorIndex<T>,
}

impl<T: Scalar> RetrievalIndex<T> {
    pub fn build(entries: Vec<CorpusEntry<T>>, mode: IndexMode, seed: u64) -> Result<Self> {
        let vectors: Vec<(usize, Vec<T>)> = entries.iter().map(|e| (e.id, e.embedding.clone())).collect();
        let index = VectorIndex::build(vectors, mode, seed)?;
        Ok(Self { entries, index })
    }

    pub fn text(&self, id: usize) -> Option<&str> {
        self.entries.iter().find(|e| e.id == id).map(|e| e.text.as_str())
    }
}

/// One sentence per non-blank line.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

/// Tab-separated `head relation tail` lines, rendered with [`template_triple`].
pub fn parse_triples(text: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cols.len() != 3 || cols.iter().any(|c| c.is_empty()) {
            return Err(Error::Jsonl {
                line: i + 1,
                message: format!("expected 3 tab-separated fields, found {}", cols.len()),
            });
        }
        out.push(template_triple(cols[0], cols[1], cols[2]));
    }
    Ok(out)
}

pub fn load_triples(path: impl AsRef<Path>) -> Result<Vec<String>> {
    parse_triples(&std::fs::read_to_string(path)?)
}
