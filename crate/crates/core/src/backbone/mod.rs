//! Pre-norm transformer encoder with a tied masked-LM head.
//!
//! Each feed-forward sublayer is kept as an explicit key matrix
//! `K ∈ d_h×d_ffn` and value matrix `V ∈ d_ffn×d_h`, so that knowledge slots
//! can be appended to them at run time.

mod forward;
mod mlm;

pub use forward::{feed_forward, forward, ForwardOptions, ForwardTrace, FfnSlots};
pub use mlm::{
    mask_sentence, mlm_accuracy_on_facts, mlm_logits, mlm_loss, pretrain, pretrain_on,
    PretrainConfig, PretrainReport,
};
pub(crate) use mlm::argmax;

use serde::{Deserialize, Serialize};

use crate::checkpoint::TensorBundle;
use crate::error::{Error, Result};
use crate::rng::Lcg64;
use crate::scalar::Scalar;
use crate::tape::{Activation, Tape, Var};
use crate::tensor::Matrix;

pub const ENCODER_FORMAT: &str = "rumi-encoder";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: usize,
    /// Inner width of each feed-forward sublayer.
    pub ffn: usize,
    pub layers: usize,
    pub heads: usize,
    pub max_positions: usize,
    #[serde(default)]
    pub activation: Activation,
    pub vocab_size: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            ffn: 256,
            layers: 4,
            heads: 4,
            max_positions: 128,
            activation: Activation::Gelu,
            vocab_size: 0,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("hidden", self.hidden),
            ("ffn", self.ffn),
            ("layers", self.layers),
            ("heads", self.heads),
            ("max_positions", self.max_positions),
            ("vocab_size", self.vocab_size),
        ];
        let mut problems: Vec<String> =
            dims.iter().filter(|(_, v)| *v == 0).map(|(k, _)| format!("{k} must be >= 1")).collect();
        if self.heads > 0 && self.hidden % self.heads != 0 {
            problems.push(format!(
                "hidden ({}) must be divisible by heads ({})",
                self.hidden, self.heads
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }
}

/// Per-layer tensor slots, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSlot {
    AttnNormGamma,
    AttnNormBeta,
    Query,
    QueryBias,
    Key,
    KeyBias,
    Value,
    ValueBias,
    Output,
    OutputBias,
    FfnNormGamma,
    FfnNormBeta,
    FfnKeys,
    FfnKeyBias,
    FfnValues,
    FfnValueBias,
}

impl LayerSlot {
    pub const ALL: [LayerSlot; 16] = [
        LayerSlot::AttnNormGamma,
        LayerSlot::AttnNormBeta,
        LayerSlot::Query,
        LayerSlot::QueryBias,
        LayerSlot::Key,
        LayerSlot::KeyBias,
        LayerSlot::Value,
        LayerSlot::ValueBias,
        LayerSlot::Output,
        LayerSlot::OutputBias,
        LayerSlot::FfnNormGamma,
        LayerSlot::FfnNormBeta,
        LayerSlot::FfnKeys,
        LayerSlot::FfnKeyBias,
        LayerSlot::FfnValues,
        LayerSlot::FfnValueBias,
    ];

    fn name(self) -> &'static str {
        match self {
            LayerSlot::AttnNormGamma => "attn_norm.gamma",
            LayerSlot::AttnNormBeta => "attn_norm.beta",
            LayerSlot::Query => "attn.query",
            LayerSlot::QueryBias => "attn.query_bias",
            LayerSlot::Key => "attn.key",
            LayerSlot::KeyBias => "attn.key_bias",
            LayerSlot::Value => "attn.value",
            LayerSlot::ValueBias => "attn.value_bias",
            LayerSlot::Output => "attn.output",
            LayerSlot::OutputBias => "attn.output_bias",
            LayerSlot::FfnNormGamma => "ffn_norm.gamma",
            LayerSlot::FfnNormBeta => "ffn_norm.beta",
            LayerSlot::FfnKeys => "ffn.keys",
            LayerSlot::FfnKeyBias => "ffn.key_bias",
            LayerSlot::FfnValues => "ffn.values",
            LayerSlot::FfnValueBias => "ffn.value_bias",
        }
    }

    fn shape(self, c: &ModelConfig) -> (usize, usize) {
        let d = c.hidden;
        match self {
            LayerSlot::Query | LayerSlot::Key | LayerSlot::Value | LayerSlot::Output => (d, d),
            LayerSlot::FfnKeys => (d, c.ffn),
            LayerSlot::FfnKeyBias => (1, c.ffn),
            LayerSlot::FfnValues => (c.ffn, d),
            _ => (1, d),
        }
    }
}

const TOKEN_EMBEDDING: usize = 0;
const POSITION_EMBEDDING: usize = 1;
const FINAL_NORM_GAMMA: usize = 2;
const FINAL_NORM_BETA: usize = 3;
const MLM_BIAS: usize = 4;
const N_GLOBAL: usize = 5;

fn layer_index(layer: usize, slot: LayerSlot) -> usize {
    N_GLOBAL + layer * LayerSlot::ALL.len() + slot as usize
}

const INIT_STD: f64 = 0.02;

/// All encoder tensors, addressable by name or by (layer, slot).
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<T> {
    config: ModelConfig,
    tensors: Vec<Matrix<T>>,
}

impl<T: Scalar> EncoderParams<T> {
    /// Random initialization from `config.seed`: weights ~ N(0, 0.02²),
    /// biases zero, norm gains one.
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = Lcg64::derived(config.seed, 0x656e_636f_6465_72);
        let d = config.hidden;
        let mut tensors = vec![
            Matrix::random_normal(config.vocab_size, d, INIT_STD, &mut rng),
            Matrix::random_normal(config.max_positions, d, INIT_STD, &mut rng),
            Matrix::filled(1, d, T::one()),
            Matrix::zeros(1, d),
            Matrix::zeros(1, config.vocab_size),
        ];
        for _ in 0..config.layers {
            for slot in LayerSlot::ALL {
                let (r, c) = slot.shape(&config);
                let m = match slot {
                    LayerSlot::AttnNormGamma | LayerSlot::FfnNormGamma => Matrix::filled(r, c, T::one()),
                    LayerSlot::Query
                    | LayerSlot::Key
                    | LayerSlot::Value
                    | LayerSlot::Output
                    | LayerSlot::FfnKeys
                    | LayerSlot::FfnValues => Matrix::random_normal(r, c, INIT_STD, &mut rng),
                    _ => Matrix::zeros(r, c),
                };
                tensors.push(m);
            }
        }
        Ok(Self { config, tensors })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[Matrix<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Matrix<T>] {
        &mut self.tensors
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(Matrix::len).sum()
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = [
            "embeddings.token",
            "embeddings.position",
            "final_norm.gamma",
            "final_norm.beta",
            "mlm.bias",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for l in 0..self.config.layers {
            for slot in LayerSlot::ALL {
                names.push(format!("layers.{l}.{}", slot.name()));
            }
        }
        names
    }

    pub fn layer(&self, layer: usize, slot: LayerSlot) -> &Matrix<T> {
        &self.tensors[layer_index(layer, slot)]
    }

    pub fn layer_mut(&mut self, layer: usize, slot: LayerSlot) -> &mut Matrix<T> {
        &mut self.tensors[layer_index(layer, slot)]
    }

    pub fn token_embeddings(&self) -> &Matrix<T> {
        &self.tensors[TOKEN_EMBEDDING]
    }

    /// Records every tensor on `tape`, as tracked leaves when `trainable`
    /// and as constants otherwise.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> BoundEncoder {
        let vars = self
            .tensors
            .iter()
            .map(|m| if trainable { tape.param(m.clone()) } else { tape.constant(m.clone()) })
            .collect();
        BoundEncoder { config: self.config, vars }
    }

    pub fn cast<U: Scalar>(&self) -> EncoderParams<U> {
        EncoderParams { config: self.config, tensors: self.tensors.iter().map(Matrix::cast).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Matrix::is_finite)
    }

    pub fn to_bundle(&self) -> TensorBundle<T> {
        let mut bundle = TensorBundle::new(
            ENCODER_FORMAT,
            serde_json::to_value(self.config).expect("config serializes"),
        );
        for (name, m) in self.names().into_iter().zip(&self.tensors) {
            bundle.push(name, m);
        }
        bundle
    }

    pub fn from_bundle(bundle: &TensorBundle<T>) -> Result<Self> {
        let config: ModelConfig = serde_json::from_value(bundle.meta.clone())
            .map_err(|e| Error::Checkpoint(format!("bad model config: {e}")))?;
        config.validate()?;
        let shell = Self::init(config)?;
        let mut tensors = Vec::with_capacity(shell.tensors.len());
        for (name, expected) in shell.names().iter().zip(&shell.tensors) {
            let m = bundle.get(name)?;
            if m.shape() != expected.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    m.shape(),
                    expected.shape()
                )));
            }
            tensors.push(m);
        }
        Ok(Self { config, tensors })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_bundle().to_bytes()
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        self.to_bundle().save(path)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_bundle(&TensorBundle::load(path, ENCODER_FORMAT)?)
    }
}

/// Tape handles for one [`EncoderParams`].
#[derive(Debug, Clone)]
pub struct BoundEncoder {
    config: ModelConfig,
    vars: Vec<Var>,
}

impl BoundEncoder {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn layer(&self, layer: usize, slot: LayerSlot) -> Var {
        self.vars[layer_index(layer, slot)]
    }

    pub fn token_embedding(&self) -> Var {
        self.vars[TOKEN_EMBEDDING]
    }

    pub fn position_embedding(&self) -> Var {
        self.vars[POSITION_EMBEDDING]
    }

    pub fn final_norm(&self) -> (Var, Var) {
        (self.vars[FINAL_NORM_GAMMA], self.vars[FINAL_NORM_BETA])
    }

    pub fn mlm_bias(&self) -> Var {
        self.vars[MLM_BIAS]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig { hidden: 8, ffn: 16, layers: 2, heads: 2, max_positions: 16, vocab_size: 20, ..Default::default() }
    }

    #[test]
    fn config_validation_lists_all_problems() {
        let bad = ModelConfig { hidden: 10, heads: 4, vocab_size: 0, ..Default::default() };
        let msg = bad.validate().unwrap_err().to_string();
        assert!(msg.contains("vocab_size") && msg.contains("divisible"), "{msg}");
        assert!(tiny().validate().is_ok());
    }

    #[test]
    fn init_is_deterministic_and_named() {
        let a = EncoderParams::<f32>::init(tiny()).unwrap();
        let b = EncoderParams::<f32>::init(tiny()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.names().len(), a.tensors().len());
        assert_eq!(a.layer(1, LayerSlot::FfnKeys).shape(), (8, 16));
        assert_eq!(a.layer(0, LayerSlot::FfnValues).shape(), (16, 8));
    }

    #[test]
    fn bundle_roundtrip_is_lossless() {
        let a = EncoderParams::<f32>::init(tiny()).unwrap();
        let bytes = a.to_bytes();
        let back =
            EncoderParams::from_bundle(&TensorBundle::from_bytes(&bytes, ENCODER_FORMAT).unwrap()).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.to_bytes(), bytes);
    }
}
