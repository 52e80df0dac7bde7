//! Knowledge rumination for small masked-language-model encoders.
//!
//! A frozen, prefix-tuned copy of a pretrained encoder is probed with
//! task-guided `[MASK]` prompts; the hidden states at the mask slots are
//! projected into extra key/value slots of a feed-forward sublayer of a
//! second, trainable copy that answers multiple-choice questions.
//!
//! All numeric code is generic over [`Scalar`]; the aliases below fix the
//! precision used for normal runs (`f32`) and for gradient checks (`f64`).

pub mod backbone;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod optim;
pub mod probe;
pub mod prompt;
pub mod rng;
pub mod rumination;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::Lcg64;
pub use scalar::Scalar;
pub use tape::{Activation, Tape, Var};
pub use tensor::Matrix;

pub type Encoder = backbone::EncoderParams<f32>;
pub type Encoder64 = backbone::EncoderParams<f64>;
pub type Model = rumination::RuminationModel<f32>;
pub type Model64 = rumination::RuminationModel<f64>;
