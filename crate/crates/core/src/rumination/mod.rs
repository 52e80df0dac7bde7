//! Knowledge reviewing with a frozen prefixed encoder, consolidation of the
//! reviewed vectors into a trainable answering encoder, multiple-choice
//! scoring and joint training.

mod model;
mod train;

pub use model::{
    ChoiceScores, FfnAugmentation, KnowledgeVectors, ModelGradients, PrefixParameters, PreparedInstance,
    ProbePlan, RuminationModel, SlotSource, MODEL_FORMAT,
};
pub use train::{evaluate, train, EpochMetrics, EvalResult, TrainConfig};

use serde::{Deserialize, Serialize};

use crate::prompt::RelevanceMode;

/// How (and whether) reviewed knowledge reaches the answering encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Baseline,
    RumiFfn,
    RumiConcat,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Baseline, Mode::RumiConcat, Mode::RumiFfn];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::RumiFfn => "rumi_ffn",
            Mode::RumiConcat => "rumi_concat",
        }
    }

    pub fn ruminates(self) -> bool {
        !matches!(self, Mode::Baseline)
    }
}

impl std::str::FromStr for Mode {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| crate::Error::Config(format!("unknown mode {s:?}")))
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuminationConfig {
    pub mode: Mode,
    pub prefix_len: usize,
    /// `[MASK]` tokens per probe prompt.
    pub mask_length: usize,
    /// Layer whose feed-forward sublayer receives the knowledge slots;
    /// `None` is the top layer.
    pub target_layer: Option<usize>,
    pub relevance: RelevanceMode,
    pub task: Option<String>,
    /// Probe each prompt in its own pass instead of one combined sequence.
    pub separate_probes: bool,
    pub seed: u64,
}

impl Default for RuminationConfig {
    fn default() -> Self {
        Self {
            mode: Mode::RumiFfn,
            prefix_len: 8,
            mask_length: 3,
            target_layer: None,
            relevance: RelevanceMode::Cosine,
            task: None,
            separate_probes: false,
            seed: 0,
        }
    }
}
