use serde::{Deserialize, Serialize};

use super::{Mode, PreparedInstance, RuminationModel};
use crate::error::{Error, Result};
use crate::optim::Adam;
use crate::rng::Lcg64;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 1e-3, batch_size: 8, epochs: 4, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub loss: f64,
    pub accuracy: f64,
    pub predictions: Vec<usize>,
}

/// Mean choice cross-entropy and accuracy without touching the parameters.
pub fn evaluate<T: Scalar>(
    model: &RuminationModel<T>,
    data: &[PreparedInstance],
    mode: Mode,
) -> Result<EvalResult> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation set".into()));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    let mut predictions = Vec::with_capacity(data.len());
    for inst in data {
        let s = model.score_prepared(inst, mode)?;
        let max = s.scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + s.scores.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - s.scores[inst.gold];
        correct += usize::from(s.predicted == inst.gold);
        predictions.push(s.predicted);
    }
    let n = data.len() as f64;
    Ok(EvalResult { loss: loss / n, accuracy: correct as f64 / n, predictions })
}

/// Trains every trainable tensor with Adam on shuffled mini-batches. After
/// each epoch one `train` row (running loss and accuracy over the epoch) and,
/// if `dev` is non-empty, one `dev` row are recorded and passed to `on_epoch`.
pub fn train<T: Scalar>(
    model: &mut RuminationModel<T>,
    train_set: &[PreparedInstance],
    dev: &[PreparedInstance],
    config: &TrainConfig,
    mode: Mode,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<Vec<EpochMetrics>> {
    if train_set.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    let mut rng = Lcg64::derived(config.seed, 0x7472_6169);
    let mut adam = Adam::new(config.lr);
    let mut metrics = Vec::new();
    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<PreparedInstance> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let (loss, hits, grads) = model.batch_pass(&batch, mode)?;
            let loss = loss.as_f64();
            if !loss.is_finite() {
                return Err(Error::Divergence(format!("epoch {epoch} (loss {loss})")));
            }
            loss_sum += loss * chunk.len() as f64;
            correct += hits;
            let g: Vec<_> = grads.trainables.into_iter().map(Some).collect();
            adam.step(&mut model.trainables_mut(), &g);
        }
        let n = train_set.len() as f64;
        let row = EpochMetrics { epoch, split: "train".into(), loss: loss_sum / n, accuracy: correct as f64 / n };
        on_epoch(&row);
        metrics.push(row);
        if !dev.is_empty() {
            let r = evaluate(model, dev, mode)?;
            let row = EpochMetrics { epoch, split: "dev".into(), loss: r.loss, accuracy: r.accuracy };
            on_epoch(&row);
            metrics.push(row);
        }
    }
    Ok(metrics)
}
