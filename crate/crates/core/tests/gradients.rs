//! Analytic gradients against central finite differences in f64.

mod common;

use rumi_core::backbone::{mask_sentence, mlm_loss, EncoderParams};
use rumi_core::data::{tokenize, Split, DEFAULT_MAX_LEN};
use rumi_core::rumination::{Mode, PreparedInstance, RuminationModel};
use rumi_core::{Lcg64, Matrix};

const EPS: f64 = 1e-4;
const TOL: f64 = 1e-4;
const SAMPLES: usize = 24;

/// Entries of a tensor to probe: all of them when small, else a seeded
/// sample drawn mostly from entries with a nonzero analytic gradient
/// (embedding rows of unused tokens and positions are exactly zero).
fn probe_entries(grad: &Matrix<f64>, rng: &mut Lcg64) -> Vec<usize> {
    let len = grad.len();
    if len <= SAMPLES {
        return (0..len).collect();
    }
    let nonzero: Vec<usize> = (0..len).filter(|&i| grad.data()[i] != 0.0).collect();
    let mut idx: Vec<usize> = (0..4).map(|_| rng.below(len)).collect();
    if !nonzero.is_empty() {
        idx.extend((4..SAMPLES).map(|_| nonzero[rng.below(nonzero.len())]));
    }
    idx
}

/// `||a - n|| / max(||a|| + ||n||, 1e-12)` over the probed entries.
fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n) * (a - n)).sum::<f64>().sqrt();
    let an: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    diff / (an + nn).max(1e-12)
}

fn check_tensor(
    name: &str,
    grad: &Matrix<f64>,
    rng: &mut Lcg64,
    mut loss_with: impl FnMut(usize, f64) -> f64,
) -> bool {
    let idx = probe_entries(grad, rng);
    let analytic: Vec<f64> = idx.iter().map(|&i| grad.data()[i]).collect();
    let numeric: Vec<f64> =
        idx.iter().map(|&i| (loss_with(i, EPS) - loss_with(i, -EPS)) / (2.0 * EPS)).collect();
    let err = rel_error(&analytic, &numeric);
    let informative = analytic.iter().any(|a| a.abs() > 1e-10);
    if informative {
        assert!(err < TOL, "{name}: relative error {err:.3e}");
    } else {
        let worst = numeric.iter().fold(0.0f64, |m, n| m.max(n.abs()));
        assert!(worst < 1e-8, "{name}: analytic gradient is zero but finite differences give {worst:.3e}");
    }
    informative
}

#[test]
fn mlm_loss_gradients() {
    let world = common::tiny_world(1);
    let vocab = common::vocab_for(&world);
    let enc: EncoderParams<f64> = common::encoder(&vocab, 1);
    let seq = tokenize(&world.sentences[0], &vocab, DEFAULT_MAX_LEN).unwrap();
    let mut rng = Lcg64::new(9);
    let (masked, targets) = mask_sentence(&seq, 0.4, &mut rng);
    let (_, grads) = mlm_loss(&enc, &masked, &targets).unwrap();
    let names = enc.names();
    let mut silent = Vec::new();
    for (t, g) in grads.iter().enumerate() {
        let informative = check_tensor(&names[t], g, &mut rng, |i, delta| {
            let mut p = enc.clone();
            p.tensors_mut()[t].data_mut()[i] += delta;
            mlm_loss(&p, &masked, &targets).unwrap().0
        });
        if !informative {
            silent.push(names[t].clone());
        }
    }
    assert!(silent.iter().all(|n| n.ends_with("attn.key_bias")), "no gradient reached {silent:?}");
}

fn prepared(model: &RuminationModel<f64>, mode: Mode) -> Vec<PreparedInstance> {
    let world = common::tiny_world(2);
    world.split(Split::Train).iter().take(3).map(|i| model.prepare(i, mode).unwrap()).collect()
}

fn trainable_names(model: &RuminationModel<f64>) -> Vec<String> {
    let layers = model.model_config().layers;
    let mut names = Vec::new();
    names.extend((0..layers).map(|l| format!("prefix.keys.{l}")));
    names.extend((0..layers).map(|l| format!("prefix.values.{l}")));
    names.extend(["w_key", "w_value", "head.weight", "head.bias"].map(String::from));
    names.extend(model.answering.names().into_iter().map(|n| format!("answering.{n}")));
    names
}

/// Tensors whose gradient is exactly zero: a key bias shifts every
/// attention logit of a query equally, and the final-norm shift and head
/// bias add the same constant to every choice score.
fn shift_invariant(name: &str) -> bool {
    name.ends_with("attn.key_bias") || name == "head.bias" || name == "answering.final_norm.beta"
}

fn check_choice_loss(mode: Mode, only: impl Fn(&str) -> bool) {
    let world = common::tiny_world(2);
    let model: RuminationModel<f64> = common::model(&world, mode, 2);
    let batch = prepared(&model, mode);
    let (_, grads) = model.loss_and_grads(&batch, mode).unwrap();
    let names = trainable_names(&model);
    assert_eq!(names.len(), grads.trainables.len());
    let mut rng = Lcg64::new(11);
    let mut checked = 0;
    for (t, g) in grads.trainables.iter().enumerate() {
        if !only(&names[t]) {
            continue;
        }
        let informative = check_tensor(&names[t], g, &mut rng, |i, delta| {
            let mut m = model.clone();
            m.trainables_mut()[t].data_mut()[i] += delta;
            m.loss_and_grads(&batch, mode).unwrap().0
        });
        assert!(informative || shift_invariant(&names[t]), "{}: no gradient reached this tensor", names[t]);
        checked += 1;
    }
    assert!(checked > 0);
}

#[test]
fn choice_loss_gradients_baseline() {
    check_choice_loss(Mode::Baseline, |n| (n.starts_with("answering.") && !n.ends_with("mlm.bias")) || n.starts_with("head."));
}

#[test]
fn choice_loss_gradients_ffn_projections() {
    check_choice_loss(Mode::RumiFfn, |n| n == "w_key" || n == "w_value");
}

#[test]
fn choice_loss_gradients_prefix() {
    check_choice_loss(Mode::RumiFfn, |n| n.starts_with("prefix."));
    check_choice_loss(Mode::RumiConcat, |n| n.starts_with("prefix."));
}

#[test]
fn choice_loss_gradients_full_ffn_model() {
    check_choice_loss(Mode::RumiFfn, |n| n.starts_with("answering.layers.1") || n.starts_with("head."));
}
