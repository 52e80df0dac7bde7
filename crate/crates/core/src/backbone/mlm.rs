use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::forward::{forward, ForwardOptions};
use super::{BoundEncoder, EncoderParams};
use crate::data::{tokenize, SyntheticWorld, TokenSequence, Vocabulary, DEFAULT_MAX_LEN};
use crate::error::{Error, Result};
use crate::optim::Adam;
use crate::rng::Lcg64;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Matrix;

/// Vocabulary logits for the given hidden rows through the tied head.
pub fn mlm_logits<T: Scalar>(tape: &mut Tape<T>, enc: &BoundEncoder, hidden_rows: Var) -> Var {
    let logits = tape.matmul_nt(hidden_rows, enc.token_embedding());
    tape.add_row(logits, enc.mlm_bias())
}

fn mlm_loss_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    enc: &BoundEncoder,
    seq: &TokenSequence,
    targets: &[u32],
    position_offset: usize,
) -> Result<Var> {
    let masks = seq.mask_positions();
    if masks.is_empty() {
        return Err(Error::NoMasks);
    }
    if masks.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} targets for {} masked positions",
            targets.len(),
            masks.len()
        )));
    }
    let trace = forward(tape, enc, seq, ForwardOptions { position_offset, ..Default::default() })?;
    let rows = tape.gather_rows(trace.hidden, masks);
    let logits = mlm_logits(tape, enc, rows);
    let targets: Vec<usize> = targets.iter().map(|&t| t as usize).collect();
    Ok(tape.cross_entropy(logits, &targets))
}

/// Mean cross-entropy over masked positions, with a gradient per tensor of
/// `params` (same order as [`EncoderParams::tensors`]).
pub fn mlm_loss<T: Scalar>(
    params: &EncoderParams<T>,
    seq_with_masks: &TokenSequence,
    targets: &[u32],
) -> Result<(T, Vec<Matrix<T>>)> {
    let mut tape = Tape::new();
    let enc = params.bind(&mut tape, true);
    let loss = mlm_loss_on_tape(&mut tape, &enc, seq_with_masks, targets, 0)?;
    let grads = tape.backward(loss);
    let g = enc
        .vars()
        .iter()
        .zip(params.tensors())
        .map(|(&v, m)| grads.get(v).cloned().unwrap_or_else(|| Matrix::zeros(m.rows(), m.cols())))
        .collect();
    Ok((tape.value(loss).to_scalar(), g))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub mask_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Each sentence starts at a random position id in `0..=position_jitter`
    /// so facts are learned at every position a probe can reach.
    pub position_jitter: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self { steps: 600, lr: 3e-3, mask_rate: 0.15, batch_size: 32, seed: 0, position_jitter: 0, checkpoint: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub losses: Vec<f64>,
}

/// Masks each non-special position with probability `rate`, at least one.
pub fn mask_sentence(seq: &TokenSequence, rate: f64, rng: &mut Lcg64) -> (TokenSequence, Vec<u32>) {
    let inner = 1..seq.len() - 1;
    let mut positions: Vec<usize> = inner.clone().filter(|_| rng.uniform() < rate).collect();
    if positions.is_empty() && !inner.is_empty() {
        positions.push(1 + rng.below(inner.len()));
    }
    let targets = positions.iter().map(|&p| seq.ids()[p]).collect();
    (seq.with_masks(&positions), targets)
}

/// Masked-LM pretraining on the world's fact sentences.
pub fn pretrain<T: Scalar>(
    params: &EncoderParams<T>,
    world: &SyntheticWorld,
    vocab: &Vocabulary,
    config: &PretrainConfig,
) -> Result<(EncoderParams<T>, PretrainReport)> {
    let corpus = world
        .sentences
        .iter()
        .map(|s| tokenize(s, vocab, DEFAULT_MAX_LEN))
        .collect::<Result<Vec<_>>>()?;
    pretrain_on(params, &corpus, config)
}

pub fn pretrain_on<T: Scalar>(
    params: &EncoderParams<T>,
    corpus: &[TokenSequence],
    config: &PretrainConfig,
) -> Result<(EncoderParams<T>, PretrainReport)> {
    let mut params = params.clone();
    let mut losses = Vec::with_capacity(config.steps);
    if config.steps > 0 {
        if corpus.is_empty() {
            return Err(Error::Empty("pretraining corpus".into()));
        }
        if config.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
    }
    let mut rng = Lcg64::derived(config.seed, 0x6d6c_6d);
    let mut adam = Adam::new(config.lr);
    let mut order: Vec<usize> = Vec::new();
    let max_positions = params.config().max_positions;
    for step in 0..config.steps {
        let mut tape = Tape::new();
        let enc = params.bind(&mut tape, true);
        let mut parts = Vec::with_capacity(config.batch_size);
        for _ in 0..config.batch_size {
            if order.is_empty() {
                order = (0..corpus.len()).collect();
                rng.shuffle(&mut order);
            }
            let idx = order.pop().expect("refilled above");
            let (masked, targets) = mask_sentence(&corpus[idx], config.mask_rate, &mut rng);
            let room = max_positions.saturating_sub(masked.len());
            let offset = if config.position_jitter > 0 { rng.below(config.position_jitter.min(room) + 1) } else { 0 };
            parts.push(mlm_loss_on_tape(&mut tape, &enc, &masked, &targets, offset)?);
        }
        let total = tape.sum(&parts);
        let loss = tape.scale(total, 1.0 / parts.len() as f64);
        let value = tape.value(loss).to_scalar().as_f64();
        if !value.is_finite() {
            return Err(Error::Divergence(format!("pretraining step {step} (loss {value})")));
        }
        losses.push(value);
        let mut grads = tape.backward(loss);
        let g: Vec<Option<Matrix<T>>> = enc.vars().iter().map(|&v| grads.take(v)).collect();
        let mut refs: Vec<&mut Matrix<T>> = params.tensors_mut().iter_mut().collect();
        adam.step(&mut refs, &g);
    }
    if let Some(path) = &config.checkpoint {
        params.save(path)?;
    }
    Ok((params, PretrainReport { losses }))
}

/// Fraction of fact sentences whose masked tail is predicted as some tail
/// the head entity is planted with.
pub fn mlm_accuracy_on_facts<T: Scalar>(
    params: &EncoderParams<T>,
    world: &SyntheticWorld,
    vocab: &Vocabulary,
) -> Result<f64> {
    if world.facts.is_empty() {
        return Err(Error::Empty("world has no facts".into()));
    }
    let mut correct = 0usize;
    for (fact, sentence) in world.facts.iter().zip(&world.sentences) {
        let seq = tokenize(sentence, vocab, DEFAULT_MAX_LEN)?;
        // [CLS] a X is a kind of Y . [SEP]
        let tail_pos = 7;
        let masked = seq.with_masks(&[tail_pos]);
        let mut tape = Tape::new();
        let enc = params.bind(&mut tape, false);
        let trace = forward(&mut tape, &enc, &masked, ForwardOptions::default())?;
        let row = tape.slice_rows(trace.hidden, tail_pos, 1);
        let logits = mlm_logits(&mut tape, &enc, row);
        let predicted = argmax(tape.value(logits).row(0));
        let predicted = vocab.token(predicted as u32).unwrap_or_default();
        if world.entails(&world.entities[fact.head], predicted) {
            correct += 1;
        }
    }
    Ok(correct as f64 / world.facts.len() as f64)
}

/// Index of the largest value; the lowest index wins ties.
pub(crate) fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
