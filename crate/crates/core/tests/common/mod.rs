#![allow(dead_code)]

use rumi_core::backbone::{EncoderParams, ModelConfig};
use rumi_core::data::{generate_world, SyntheticWorld, Vocabulary, WorldParams};
use rumi_core::prompt::PromptTemplates;
use rumi_core::rumination::{Mode, RuminationConfig, RuminationModel};
use rumi_core::{Lcg64, Matrix, Scalar};

pub fn tiny_world(seed: u64) -> SyntheticWorld {
    generate_world(WorldParams::new(seed, 12, 16, 20)).unwrap()
}

pub fn vocab_for(world: &SyntheticWorld) -> Vocabulary {
    let templates = PromptTemplates::default();
    Vocabulary::from_texts(world.texts().map(String::from).chain(templates.words())).unwrap()
}

pub fn tiny_config(vocab_size: usize, seed: u64) -> ModelConfig {
    ModelConfig { hidden: 8, ffn: 16, layers: 2, heads: 2, max_positions: 64, vocab_size, seed, ..Default::default() }
}

/// Adds N(0, std) noise to every tensor so activations leave the
/// near-linear regime of a fresh init.
pub fn jitter<T: Scalar>(tensors: Vec<&mut Matrix<T>>, std: f64, rng: &mut Lcg64) {
    for m in tensors {
        for v in m.data_mut() {
            *v = *v + T::c(std * rng.normal());
        }
    }
}

pub fn encoder<T: Scalar>(vocab: &Vocabulary, seed: u64) -> EncoderParams<T> {
    let mut enc = EncoderParams::<T>::init(tiny_config(vocab.len(), seed)).unwrap();
    let mut rng = Lcg64::new(seed ^ 0x5eed);
    jitter(enc.tensors_mut().iter_mut().collect(), 0.3, &mut rng);
    enc
}

pub fn model<T: Scalar>(world: &SyntheticWorld, mode: Mode, seed: u64) -> RuminationModel<T> {
    let vocab = vocab_for(world);
    let enc = encoder::<T>(&vocab, seed);
    let cfg = RuminationConfig { mode, prefix_len: 2, mask_length: 1, seed, ..Default::default() };
    let mut m = RuminationModel::new(&enc, vocab, PromptTemplates::default(), cfg).unwrap();
    let mut rng = Lcg64::new(seed ^ 0xabc);
    let layers = m.model_config().layers;
    // prefix, W_k, W_v and head only; the answering encoder already carries noise
    let n = 2 * layers + 4;
    jitter(m.trainables_mut().into_iter().take(n).collect(), 0.3, &mut rng);
    m
}
