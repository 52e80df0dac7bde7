use serde::{Deserialize, Serialize};

use super::{embed_query, RetrievalIndex};
use crate::backbone::mlm_logits;
use crate::error::Result;
use crate::rumination::{RuminationModel, SlotSource};
use crate::scalar::Scalar;
use crate::tape::{softmax_rows, Tape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenProb {
    pub token: String,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotTokens {
    pub slot: usize,
    pub source: SlotSource,
    pub tokens: Vec<TokenProb>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub id: usize,
    pub text: String,
    pub score: f64,
}

/// A retrieval section; `available` is false when no index was supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub available: bool,
    pub hits: Vec<RetrievalHit>,
}

impl Section {
    fn unavailable() -> Self {
        Self { available: false, hits: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpretReport {
    pub question: String,
    pub vocabulary: Vec<SlotTokens>,
    pub corpus: Section,
    pub triples: Section,
}

fn search<T: Scalar>(index: Option<&RetrievalIndex<T>>, query: &[T], k: usize) -> Result<Section> {
    let Some(index) = index else {
        return Ok(Section::unavailable());
    };
    let hits = index
        .index
        .query(query, k.min(index.entries.len()))?
        .into_iter()
        .map(|h| RetrievalHit { id: h.id, text: index.text(h.id).unwrap_or_default().to_string(), score: h.score })
        .collect();
    Ok(Section { available: true, hits })
}

/// Maps the knowledge vectors of `question` into vocabulary space through
/// the reviewing encoder's MLM head, and into corpus and triple space through
/// the mean knowledge vector.
pub fn interpret<T: Scalar>(
    model: &RuminationModel<T>,
    question: &str,
    corpus: Option<&RetrievalIndex<T>>,
    triples: Option<&RetrievalIndex<T>>,
    k: usize,
) -> Result<InterpretReport> {
    let r = model.review(question)?;
    let mut tape = Tape::new();
    let enc = model.reviewing().bind(&mut tape, false);
    let rv = tape.constant(r.vectors.clone());
    let logits = mlm_logits(&mut tape, &enc, rv);
    let probs = softmax_rows(tape.value(logits));
    let mut vocabulary = Vec::with_capacity(r.len());
    for (slot, source) in r.provenance.iter().enumerate() {
        let row = probs.row(slot);
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
        let tokens = order
            .into_iter()
            .take(k)
            .map(|i| TokenProb {
                token: model.vocab.token(i as u32).unwrap_or_default().to_string(),
                prob: row[i].as_f64(),
            })
            .collect();
        vocabulary.push(SlotTokens { slot, source: source.clone(), tokens });
    }
    let query = embed_query(&r)?;
    Ok(InterpretReport {
        question: question.to_string(),
        vocabulary,
        corpus: search(corpus, &query, k)?,
        triples: search(triples, &query, k)?,
    })
}
