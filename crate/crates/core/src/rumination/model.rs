use serde::{Deserialize, Serialize};

use super::{Mode, RuminationConfig};
use crate::backbone::{forward, BoundEncoder, EncoderParams, FfnSlots, ForwardOptions, ModelConfig};
use crate::checkpoint::TensorBundle;
use crate::data::{tokenize, McqInstance, TokenSequence, Vocabulary};
use crate::error::{Error, Result};
use crate::prompt::{
    build_prompts, extract_mentions, score_mentions, PromptKind, PromptSpec, PromptTemplates, RelevanceScorer,
};
use crate::rng::Lcg64;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Matrix;

pub const MODEL_FORMAT: &str = "rumi-model";

const INIT_STD: f64 = 0.02;

/// Trainable key/value rows prepended to every attention layer of the
/// reviewing encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixParameters<T> {
    pub keys: Vec<Matrix<T>>,
    pub values: Vec<Matrix<T>>,
}

impl<T: Scalar> PrefixParameters<T> {
    pub fn init(layers: usize, prefix_len: usize, hidden: usize, rng: &mut Lcg64) -> Self {
        let mut block = || Matrix::random_normal(prefix_len, hidden, INIT_STD, rng);
        let keys = (0..layers).map(|_| block()).collect();
        let values = (0..layers).map(|_| block()).collect();
        Self { keys, values }
    }

    pub fn prefix_len(&self) -> usize {
        self.keys.first().map_or(0, Matrix::rows)
    }
}

/// Projections of knowledge vectors into extra key columns and value rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FfnAugmentation<T> {
    pub w_key: Matrix<T>,
    pub w_value: Matrix<T>,
    pub layer: usize,
}

impl<T: Scalar> FfnAugmentation<T> {
    pub fn init(hidden: usize, layer: usize, rng: &mut Lcg64) -> Self {
        Self {
            w_key: Matrix::random_normal(hidden, hidden, INIT_STD, rng),
            w_value: Matrix::random_normal(hidden, hidden, INIT_STD, rng),
            layer,
        }
    }
}

/// Which prompt and which of its `[MASK]` slots produced a knowledge vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSource {
    pub prompt: usize,
    pub kind: PromptKind,
    pub slot: usize,
}

/// Hidden states at every `[MASK]` slot of the probe prompts, in prompt order.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeVectors<T> {
    pub vectors: Matrix<T>,
    pub provenance: Vec<SlotSource>,
}

impl<T: Scalar> KnowledgeVectors<T> {
    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.rows() == 0
    }

    pub fn width(&self) -> usize {
        self.vectors.cols()
    }
}

/// Probe prompts of one question and the sequences that carry them.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbePlan {
    pub prompts: Vec<PromptSpec>,
    pub sequences: Vec<TokenSequence>,
    pub provenance: Vec<SlotSource>,
}

impl ProbePlan {
    pub fn slot_count(&self) -> usize {
        self.provenance.len()
    }
}

/// An instance tokenized once for repeated training and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedInstance {
    pub choices: Vec<TokenSequence>,
    pub gold: usize,
    pub probe: Option<ProbePlan>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceScores {
    pub scores: Vec<f64>,
    pub predicted: usize,
}

/// Gradients of the choice loss. `reviewing` is read back from the tape for
/// every reviewing-encoder tensor and is all zeros by construction.
#[derive(Debug, Clone)]
pub struct ModelGradients<T> {
    pub reviewing: Vec<Matrix<T>>,
    pub trainables: Vec<Matrix<T>>,
}

/// Frozen reviewing encoder with its prefix, and the answering encoder with
/// its augmentation projections and choice head.
#[derive(Debug, Clone, PartialEq)]
pub struct RuminationModel<T> {
    pub config: RuminationConfig,
    pub vocab: Vocabulary,
    pub templates: PromptTemplates,
    reviewing: EncoderParams<T>,
    pub prefix: PrefixParameters<T>,
    pub answering: EncoderParams<T>,
    pub augmentation: FfnAugmentation<T>,
    pub head: Matrix<T>,
    pub head_bias: Matrix<T>,
}

pub(crate) struct BoundModel {
    reviewing: BoundEncoder,
    prefix_keys: Vec<Var>,
    prefix_values: Vec<Var>,
    w_key: Var,
    w_value: Var,
    head: Var,
    head_bias: Var,
    answering: BoundEncoder,
}

impl BoundModel {
    fn trainable_vars(&self) -> Vec<Var> {
        let mut v = Vec::new();
        v.extend(&self.prefix_keys);
        v.extend(&self.prefix_values);
        v.extend([self.w_key, self.w_value, self.head, self.head_bias]);
        v.extend(self.answering.vars());
        v
    }
}

impl<T: Scalar> RuminationModel<T> {
    /// Both encoders start as copies of `pretrained`; the other trainables
    /// are drawn from `config.seed`.
    pub fn new(
        pretrained: &EncoderParams<T>,
        vocab: Vocabulary,
        templates: PromptTemplates,
        config: RuminationConfig,
    ) -> Result<Self> {
        let mc = *pretrained.config();
        if vocab.len() != mc.vocab_size {
            return Err(Error::Config(format!(
                "vocabulary has {} tokens but the encoder expects {}",
                vocab.len(),
                mc.vocab_size
            )));
        }
        if config.mask_length == 0 {
            return Err(Error::Config("mask_length must be >= 1".into()));
        }
        let layer = config.target_layer.unwrap_or(mc.layers - 1);
        if layer >= mc.layers {
            return Err(Error::LayerOutOfRange { layer, layers: mc.layers });
        }
        let mut rng = Lcg64::derived(config.seed, 0x7275_6d69);
        let prefix = PrefixParameters::init(mc.layers, config.prefix_len, mc.hidden, &mut rng);
        let augmentation = FfnAugmentation::init(mc.hidden, layer, &mut rng);
        let head = Matrix::random_normal(1, mc.hidden, INIT_STD, &mut rng);
        Ok(Self {
            config,
            vocab,
            templates,
            reviewing: pretrained.clone(),
            prefix,
            answering: pretrained.clone(),
            augmentation,
            head,
            head_bias: Matrix::zeros(1, 1),
        })
    }

    pub fn model_config(&self) -> &ModelConfig {
        self.answering.config()
    }

    pub fn reviewing(&self) -> &EncoderParams<T> {
        &self.reviewing
    }

    /// Checkpoint bytes of the frozen reviewing encoder.
    pub fn reviewing_bytes(&self) -> Vec<u8> {
        self.reviewing.to_bytes()
    }

    pub fn trainables(&self) -> Vec<&Matrix<T>> {
        let mut v: Vec<&Matrix<T>> = Vec::new();
        v.extend(&self.prefix.keys);
        v.extend(&self.prefix.values);
        v.extend([&self.augmentation.w_key, &self.augmentation.w_value, &self.head, &self.head_bias]);
        v.extend(self.answering.tensors());
        v
    }

    pub fn trainables_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut v: Vec<&mut Matrix<T>> = Vec::new();
        v.extend(self.prefix.keys.iter_mut());
        v.extend(self.prefix.values.iter_mut());
        v.push(&mut self.augmentation.w_key);
        v.push(&mut self.augmentation.w_value);
        v.push(&mut self.head);
        v.push(&mut self.head_bias);
        v.extend(self.answering.tensors_mut().iter_mut());
        v
    }

    pub(crate) fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> BoundModel {
        let reviewing = self.reviewing.bind(tape, false);
        let mut leaf = |m: &Matrix<T>| if trainable { tape.param(m.clone()) } else { tape.constant(m.clone()) };
        let prefix_keys = self.prefix.keys.iter().map(&mut leaf).collect();
        let prefix_values = self.prefix.values.iter().map(&mut leaf).collect();
        let w_key = leaf(&self.augmentation.w_key);
        let w_value = leaf(&self.augmentation.w_value);
        let head = leaf(&self.head);
        let head_bias = leaf(&self.head_bias);
        let answering = self.answering.bind(tape, trainable);
        BoundModel { reviewing, prefix_keys, prefix_values, w_key, w_value, head, head_bias, answering }
    }

    /// Builds the probe prompts for a question: Top-2 relevant mentions,
    /// then the task or background prompt.
    pub fn plan_probe(&self, question: &str) -> Result<ProbePlan> {
        let candidates = extract_mentions(question, Some(&self.vocab));
        let mentions = if candidates.is_empty() {
            Vec::new()
        } else {
            let scorer = RelevanceScorer::new(&self.reviewing, &self.vocab, self.config.seed);
            score_mentions(&scorer, question, &candidates, self.config.relevance)?.top2
        };
        let prompts = build_prompts(
            &self.templates,
            question,
            &mentions,
            self.config.task.as_deref(),
            self.config.mask_length,
        )?;
        let mut provenance = Vec::new();
        for (pi, p) in prompts.iter().enumerate() {
            for slot in 0..p.mask_count() {
                provenance.push(SlotSource { prompt: pi, kind: p.kind, slot });
            }
        }
        if provenance.is_empty() {
            return Err(Error::NoMasks);
        }
        let max = self.model_config().max_positions;
        let sequences = if self.config.separate_probes {
            prompts
                .iter()
                .map(|p| tokenize(&format!("{question} [SEP] {}", p.text), &self.vocab, max))
                .collect::<Result<Vec<_>>>()?
        } else {
            let joined: Vec<&str> = prompts.iter().map(|p| p.text.as_str()).collect();
            vec![tokenize(&format!("{question} [SEP] {}", joined.join(" ")), &self.vocab, max)?]
        };
        let slots: usize = sequences.iter().map(|s| s.mask_positions().len()).sum();
        if slots != provenance.len() {
            return Err(Error::Shape(format!(
                "question text contributes [MASK] tokens ({slots} slots for {} prompt masks)",
                provenance.len()
            )));
        }
        Ok(ProbePlan { prompts, sequences, provenance })
    }

    /// Tokenizes the answer sequences and, when `mode` ruminates, the probe.
    pub fn prepare(&self, inst: &McqInstance, mode: Mode) -> Result<PreparedInstance> {
        inst.validate()?;
        let prefix = if inst.context.trim().is_empty() {
            inst.question.clone()
        } else {
            format!("{} {}", inst.context, inst.question)
        };
        let max = self.model_config().max_positions;
        let choices = inst
            .choices
            .iter()
            .map(|a| tokenize(&format!("{prefix} [SEP] {a}"), &self.vocab, max))
            .collect::<Result<Vec<_>>>()?;
        let probe = if mode.ruminates() { Some(self.plan_probe(&inst.question)?) } else { None };
        Ok(PreparedInstance { choices, gold: inst.gold, probe })
    }

    /// Knowledge vectors `r` on the tape: mask-slot hidden states of the
    /// prefixed reviewing encoder.
    pub(crate) fn review_on_tape(&self, tape: &mut Tape<T>, bound: &BoundModel, plan: &ProbePlan) -> Result<Var> {
        let opts = ForwardOptions {
            prefix_keys: Some(&bound.prefix_keys),
            prefix_values: Some(&bound.prefix_values),
            ..Default::default()
        };
        let mut parts = Vec::with_capacity(plan.sequences.len());
        for seq in &plan.sequences {
            let trace = forward(tape, &bound.reviewing, seq, opts)?;
            parts.push(tape.gather_rows(trace.hidden, seq.mask_positions()));
        }
        Ok(if parts.len() == 1 { parts[0] } else { tape.concat_rows(&parts) })
    }

    /// Projects `r` (`n×d`) into `n` key columns `W_k·rᵢ` and `n` value rows
    /// `W_v·rᵢ` of the target layer.
    pub(crate) fn consolidate_ffn_on_tape(&self, tape: &mut Tape<T>, bound: &BoundModel, r: Var) -> Result<FfnSlots> {
        let (n, width) = tape.shape(r);
        let d = self.model_config().hidden;
        if width != d {
            return Err(Error::Shape(format!("knowledge width {width} does not match W_k width {d}")));
        }
        if n == 0 {
            return Err(Error::Empty("knowledge vectors".into()));
        }
        let rt = tape.transpose(r);
        let keys = tape.matmul(bound.w_key, rt);
        let values = tape.matmul_nt(r, bound.w_value);
        Ok(FfnSlots { layer: self.augmentation.layer, keys, values })
    }

    /// Per-choice scores (`1×k`) of one instance.
    pub(crate) fn scores_on_tape(
        &self,
        tape: &mut Tape<T>,
        bound: &BoundModel,
        inst: &PreparedInstance,
        mode: Mode,
    ) -> Result<Var> {
        if inst.choices.is_empty() {
            return Err(Error::Empty("choice list".into()));
        }
        let mut opts = ForwardOptions::default();
        if mode.ruminates() {
            let plan = inst
                .probe
                .as_ref()
                .ok_or_else(|| Error::Config("instance was prepared without a probe".into()))?;
            let r = self.review_on_tape(tape, bound, plan)?;
            match mode {
                Mode::RumiFfn => opts.ffn_slots = Some(self.consolidate_ffn_on_tape(tape, bound, r)?),
                Mode::RumiConcat => opts.extra_positions = Some(r),
                Mode::Baseline => unreachable!(),
            }
        }
        let mut scores = Vec::with_capacity(inst.choices.len());
        for seq in &inst.choices {
            let trace = forward(tape, &bound.answering, seq, opts)?;
            let cls = tape.slice_rows(trace.hidden, 0, 1);
            let s = tape.matmul_nt(cls, bound.head);
            scores.push(tape.add(s, bound.head_bias));
        }
        Ok(tape.concat_cols(&scores))
    }

    pub fn score_prepared(&self, inst: &PreparedInstance, mode: Mode) -> Result<ChoiceScores> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let s = self.scores_on_tape(&mut tape, &bound, inst, mode)?;
        let scores: Vec<f64> = tape.value(s).row(0).iter().map(|v| v.as_f64()).collect();
        let predicted = crate::backbone::argmax(&scores);
        Ok(ChoiceScores { scores, predicted })
    }

    /// Scores every choice of `inst`; the prediction is the arg-max with the
    /// lowest index winning ties.
    pub fn score_choices(&self, inst: &McqInstance, mode: Mode) -> Result<ChoiceScores> {
        self.score_prepared(&self.prepare(inst, mode)?, mode)
    }

    /// Knowledge vectors for a question, outside of training.
    pub fn review(&self, question: &str) -> Result<KnowledgeVectors<T>> {
        let plan = self.plan_probe(question)?;
        self.review_plan(&plan)
    }

    pub fn review_plan(&self, plan: &ProbePlan) -> Result<KnowledgeVectors<T>> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let r = self.review_on_tape(&mut tape, &bound, plan)?;
        Ok(KnowledgeVectors { vectors: tape.value(r).clone(), provenance: plan.provenance.clone() })
    }

    /// Mean choice cross-entropy over `batch` and its gradients.
    pub fn loss_and_grads(&self, batch: &[PreparedInstance], mode: Mode) -> Result<(T, ModelGradients<T>)> {
        self.batch_pass(batch, mode).map(|(loss, _, g)| (loss, g))
    }

    /// Loss, number of correct arg-max predictions and gradients of a batch.
    pub(crate) fn batch_pass(&self, batch: &[PreparedInstance], mode: Mode) -> Result<(T, usize, ModelGradients<T>)> {
        if batch.is_empty() {
            return Err(Error::Empty("training batch".into()));
        }
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, true);
        let mut losses = Vec::with_capacity(batch.len());
        let mut correct = 0;
        for inst in batch {
            let s = self.scores_on_tape(&mut tape, &bound, inst, mode)?;
            if crate::backbone::argmax(tape.value(s).row(0)) == inst.gold {
                correct += 1;
            }
            losses.push(tape.cross_entropy(s, &[inst.gold]));
        }
        let total = tape.sum(&losses);
        let loss = tape.scale(total, 1.0 / batch.len() as f64);
        let value = tape.value(loss).to_scalar();
        let mut grads = tape.backward(loss);
        let zeros_like = |m: &Matrix<T>| Matrix::zeros(m.rows(), m.cols());
        let reviewing = bound
            .reviewing
            .vars()
            .iter()
            .zip(self.reviewing.tensors())
            .map(|(&v, m)| grads.take(v).unwrap_or_else(|| zeros_like(m)))
            .collect();
        let trainables = bound
            .trainable_vars()
            .into_iter()
            .zip(self.trainables())
            .map(|(v, m)| grads.take(v).unwrap_or_else(|| zeros_like(m)))
            .collect();
        Ok((value, correct, ModelGradients { reviewing, trainables }))
    }

    pub fn to_bundle(&self) -> TensorBundle<T> {
        let meta = serde_json::json!({
            "rumination": self.config,
            "model": self.model_config(),
            "vocab": self.vocab,
            "target_layer": self.augmentation.layer,
        });
        let mut b = TensorBundle::new(MODEL_FORMAT, meta);
        for (name, m) in self.reviewing.names().into_iter().zip(self.reviewing.tensors()) {
            b.push(format!("reviewing.{name}"), m);
        }
        for (l, m) in self.prefix.keys.iter().enumerate() {
            b.push(format!("prefix.keys.{l}"), m);
        }
        for (l, m) in self.prefix.values.iter().enumerate() {
            b.push(format!("prefix.values.{l}"), m);
        }
        b.push("augmentation.w_key", &self.augmentation.w_key);
        b.push("augmentation.w_value", &self.augmentation.w_value);
        b.push("head.weight", &self.head);
        b.push("head.bias", &self.head_bias);
        for (name, m) in self.answering.names().into_iter().zip(self.answering.tensors()) {
            b.push(format!("answering.{name}"), m);
        }
        b
    }

    pub fn from_bundle(b: &TensorBundle<T>, templates: PromptTemplates) -> Result<Self> {
        let field = |k: &str| {
            b.meta.get(k).cloned().ok_or_else(|| Error::Checkpoint(format!("model checkpoint lacks {k}")))
        };
        let config: RuminationConfig = serde_json::from_value(field("rumination")?)?;
        let mc: ModelConfig = serde_json::from_value(field("model")?)?;
        let vocab: Vocabulary = serde_json::from_value(field("vocab")?)?;
        let encoder = |prefix: &str| -> Result<EncoderParams<T>> {
            let mut sub = TensorBundle::new(crate::backbone::ENCODER_FORMAT, serde_json::to_value(mc)?);
            for t in &b.tensors {
                if let Some(name) = t.name.strip_prefix(prefix) {
                    sub.tensors.push(crate::checkpoint::NamedTensor { name: name.to_string(), ..t.clone() });
                }
            }
            EncoderParams::from_bundle(&sub)
        };
        let reviewing = encoder("reviewing.")?;
        let answering = encoder("answering.")?;
        let mut model = Self::new(&reviewing, vocab, templates, config)?;
        model.answering = answering;
        for l in 0..mc.layers {
            model.prefix.keys[l] = b.get(&format!("prefix.keys.{l}"))?;
            model.prefix.values[l] = b.get(&format!("prefix.values.{l}"))?;
        }
        model.augmentation.w_key = b.get("augmentation.w_key")?;
        model.augmentation.w_value = b.get("augmentation.w_value")?;
        model.head = b.get("head.weight")?;
        model.head_bias = b.get("head.bias")?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        self.to_bundle().save(path)
    }

    pub fn load(path: impl AsRef<std::path::Path>, templates: PromptTemplates) -> Result<Self> {
        Self::from_bundle(&TensorBundle::load(path, MODEL_FORMAT)?, templates)
    }
}
