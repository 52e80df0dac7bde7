use serde::{Deserialize, Serialize};

use crate::backbone::{forward, EncoderParams, ForwardOptions};
use crate::data::{tokenize, Vocabulary, DEFAULT_MAX_LEN};
use crate::error::Result;
use crate::rng::Lcg64;
use crate::scalar::Scalar;
use crate::tape::Tape;
use crate::tensor::{cosine, dot, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RelevanceMode {
    /// Scalar head on the `[CLS]` state of `q [SEP] m`.
    Cls,
    /// Cosine of mean-pooled encodings of `q` and `m`.
    #[default]
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceScore {
    pub mention: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionScores {
    pub scores: Vec<RelevanceScore>,
    pub top2: Vec<String>,
}

/// Encoder plus the scalar head used in `cls` mode.
#[derive(Debug, Clone)]
pub struct RelevanceScorer<'a, T> {
    encoder: &'a EncoderParams<T>,
    vocab: &'a Vocabulary,
    head: Matrix<T>,
    head_bias: T,
}

impl<'a, T: Scalar> RelevanceScorer<'a, T> {
    pub fn new(encoder: &'a EncoderParams<T>, vocab: &'a Vocabulary, seed: u64) -> Self {
        let mut rng = Lcg64::derived(seed, 0x636c_73);
        let d = encoder.config().hidden;
        let head = Matrix::random_normal(1, d, 1.0 / (d as f64).sqrt(), &mut rng);
        Self { encoder, vocab, head, head_bias: T::zero() }
    }

    pub fn with_head(mut self, head: Matrix<T>, bias: T) -> Self {
        assert_eq!(head.shape(), (1, self.encoder.config().hidden), "head width");
        self.head = head;
        self.head_bias = bias;
        self
    }

    fn hidden(&self, text: &str) -> Result<Matrix<T>> {
        let seq = tokenize(text, self.vocab, DEFAULT_MAX_LEN)?;
        let mut tape = Tape::new();
        let enc = self.encoder.bind(&mut tape, false);
        let trace = forward(&mut tape, &enc, &seq, ForwardOptions::default())?;
        Ok(tape.value(trace.hidden).clone())
    }

    pub fn score(&self, question: &str, mention: &str, mode: RelevanceMode) -> Result<f64> {
        Ok(match mode {
            RelevanceMode::Cls => {
                let h = self.hidden(&format!("{question} [SEP] {mention}"))?;
                (dot(self.head.row(0), h.row(0)) + self.head_bias).tanh().as_f64()
            }
            RelevanceMode::Cosine => {
                let q = self.hidden(question)?.mean_rows();
                let m = self.hidden(mention)?.mean_rows();
                cosine(q.row(0), m.row(0)).as_f64().clamp(-1.0, 1.0)
            }
        })
    }
}

/// Indices of the `k` highest scores; ties keep the earlier index first.
pub fn top_k_by_score(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Scores every mention against the question and keeps the top two.
pub fn score_mentions<T: Scalar>(
    scorer: &RelevanceScorer<'_, T>,
    question: &str,
    mentions: &[String],
    mode: RelevanceMode,
) -> Result<MentionScores> {
    let scores = mentions
        .iter()
        .map(|m| Ok(RelevanceScore { mention: m.clone(), score: scorer.score(question, m, mode)? }))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = scores.iter().map(|s| s.score).collect();
    let top2 = top_k_by_score(&values, 2).into_iter().map(|i| mentions[i].clone()).collect();
    Ok(MentionScores { scores, top2 })
}
