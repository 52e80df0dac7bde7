mod common;

use proptest::prelude::*;

use rumi_core::backbone::{
    feed_forward, forward, mlm_accuracy_on_facts, mlm_loss, pretrain, pretrain_on, EncoderParams, ForwardOptions,
    PretrainConfig,
};
use rumi_core::data::{tokenize, DEFAULT_MAX_LEN};
use rumi_core::optim::Adam;
use rumi_core::{Activation, Lcg64, Matrix, Tape};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn zero_value_rows_leave_ffn_unchanged(seed in any::<u64>(), rows in 1usize..5, n in 1usize..6) {
        let (d, f) = (6, 10);
        let mut rng = Lcg64::new(seed);
        let mut t = Tape::<f32>::new();
        let h = t.constant(Matrix::random_normal(rows, d, 1.0, &mut rng));
        let k = t.constant(Matrix::random_normal(d, f, 1.0, &mut rng));
        let kb = t.constant(Matrix::random_normal(1, f, 1.0, &mut rng));
        let v = t.constant(Matrix::random_normal(f, d, 1.0, &mut rng));
        let vb = t.constant(Matrix::random_normal(1, d, 1.0, &mut rng));
        let ek = t.constant(Matrix::random_normal(d, n, 1.0, &mut rng));
        let ev = t.constant(Matrix::zeros(n, d));
        let base = feed_forward(&mut t, h, k, Some(kb), v, Some(vb), Activation::Gelu, None).unwrap();
        let aug = feed_forward(&mut t, h, k, Some(kb), v, Some(vb), Activation::Gelu, Some((ek, ev))).unwrap();
        let bits = |m: &Matrix<f32>| m.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(t.value(base)), bits(t.value(aug)));
    }
}

#[test]
fn mlm_loss_decreases_under_full_batch_training() {
    let world = common::tiny_world(4);
    let vocab = common::vocab_for(&world);
    let mut params = EncoderParams::<f64>::init(common::tiny_config(vocab.len(), 4)).unwrap();
    let mut rng = Lcg64::new(4);
    let batch: Vec<_> = world.sentences[..10]
        .iter()
        .map(|s| rumi_core::backbone::mask_sentence(&tokenize(s, &vocab, DEFAULT_MAX_LEN).unwrap(), 0.3, &mut rng))
        .collect();
    let mut adam = Adam::new(1e-2);
    let mut losses = Vec::new();
    for _ in 0..50 {
        let mut total = 0.0;
        let mut grads: Vec<Matrix<f64>> =
            params.tensors().iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect();
        for (seq, targets) in &batch {
            let (l, g) = mlm_loss(&params, seq, targets).unwrap();
            total += l / batch.len() as f64;
            for (acc, gi) in grads.iter_mut().zip(g) {
                acc.add_assign(&gi.map(|x| x / batch.len() as f64));
            }
        }
        losses.push(total);
        let g: Vec<_> = grads.into_iter().map(Some).collect();
        adam.step(&mut params.tensors_mut().iter_mut().collect::<Vec<_>>(), &g);
    }
    for w in losses.windows(2) {
        assert!(w[1] < w[0], "{losses:?}");
    }
}

#[test]
fn zero_steps_leave_parameters_unchanged() {
    let world = common::tiny_world(0);
    let vocab = common::vocab_for(&world);
    let params = EncoderParams::<f32>::init(common::tiny_config(vocab.len(), 0)).unwrap();
    let (out, report) = pretrain(&params, &world, &vocab, &PretrainConfig { steps: 0, ..Default::default() }).unwrap();
    assert_eq!(out.to_bytes(), params.to_bytes());
    assert!(report.losses.is_empty());
}

#[test]
fn pretraining_is_byte_deterministic_and_writes_checkpoint() {
    let world = common::tiny_world(1);
    let vocab = common::vocab_for(&world);
    let params = EncoderParams::<f32>::init(common::tiny_config(vocab.len(), 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("enc.json");
    let cfg = PretrainConfig { steps: 30, batch_size: 4, checkpoint: Some(path.clone()), ..Default::default() };
    let (a, ra) = pretrain(&params, &world, &vocab, &cfg).unwrap();
    let (b, rb) = pretrain(&params, &world, &vocab, &PretrainConfig { checkpoint: None, ..cfg.clone() }).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
    assert_eq!(ra, rb);
    assert_eq!(std::fs::read(&path).unwrap(), a.to_bytes());
    assert_ne!(a.to_bytes(), params.to_bytes());
}

#[test]
fn position_jitter_moves_facts_away_from_the_start() {
    let world = common::tiny_world(2);
    let vocab = common::vocab_for(&world);
    let params = EncoderParams::<f32>::init(common::tiny_config(vocab.len(), 2)).unwrap();
    let corpus: Vec<_> = world.sentences.iter().map(|s| tokenize(s, &vocab, DEFAULT_MAX_LEN).unwrap()).collect();
    let cfg = PretrainConfig { steps: 5, batch_size: 4, ..Default::default() };
    let (plain, _) = pretrain_on(&params, &corpus, &cfg).unwrap();
    let (jittered, _) = pretrain_on(&params, &corpus, &PretrainConfig { position_jitter: 20, ..cfg }).unwrap();
    // rows past the longest sentence only receive gradient under jitter
    let longest = corpus.iter().map(|s| s.len()).max().unwrap();
    let tail = |p: &EncoderParams<f32>| p.tensors()[1].data()[longest * 8..].to_vec();
    assert_eq!(tail(&plain), tail(&params));
    assert_ne!(tail(&jittered), tail(&params));
}

#[test]
fn fact_accuracy_is_a_fraction() {
    let world = common::tiny_world(3);
    let vocab = common::vocab_for(&world);
    let params = EncoderParams::<f32>::init(common::tiny_config(vocab.len(), 3)).unwrap();
    let acc = mlm_accuracy_on_facts(&params, &world, &vocab).unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn position_offset_is_bounded_by_max_positions() {
    let world = common::tiny_world(0);
    let vocab = common::vocab_for(&world);
    let params = EncoderParams::<f32>::init(common::tiny_config(vocab.len(), 0)).unwrap();
    let seq = tokenize(&world.sentences[0], &vocab, DEFAULT_MAX_LEN).unwrap();
    let mut t = Tape::new();
    let enc = params.bind(&mut t, false);
    let max = params.config().max_positions;
    assert!(forward(&mut t, &enc, &seq, ForwardOptions { position_offset: max - seq.len(), ..Default::default() }).is_ok());
    assert!(forward(&mut t, &enc, &seq, ForwardOptions { position_offset: max - seq.len() + 1, ..Default::default() }).is_err());
}
