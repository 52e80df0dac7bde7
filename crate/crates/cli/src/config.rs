//! Experiment configuration: a flat set of keys read from a `key = value`
//! file (values are JSON when they parse as JSON, strings otherwise) or a
//! JSON object, then overridden from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use rumi_core::backbone::{ModelConfig, PretrainConfig};
use rumi_core::data::WorldParams;
use rumi_core::prompt::RelevanceMode;
use rumi_core::rumination::{Mode, RuminationConfig, TrainConfig};
use rumi_core::{Activation, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seeds the world, the encoder initialization and pretraining.
    pub seed: u64,
    pub entities: usize,
    pub facts: usize,
    pub questions: usize,
    pub disjoint_eval: bool,

    pub hidden: usize,
    pub ffn: usize,
    pub layers: usize,
    pub heads: usize,
    pub max_positions: usize,
    pub activation: Activation,

    pub pretrain_steps: usize,
    pub pretrain_lr: f64,
    pub pretrain_batch_size: usize,
    pub mask_rate: f64,
    /// Largest random start position for pretraining sentences; 0 disables.
    pub position_jitter: usize,

    pub modes: Vec<Mode>,
    /// Seeds of the rumination trainables and of batch order, one run each.
    pub seeds: Vec<u64>,
    pub prefix_len: usize,
    pub mask_length: usize,
    pub target_layer: Option<usize>,
    pub relevance: RelevanceMode,
    pub task: Option<String>,
    pub separate_probes: bool,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Prompt template file; the shipped templates when unset.
    pub templates: Option<PathBuf>,
    /// Split scored by `eval`: train, dev, test or all.
    pub eval_split: String,

    pub grid_mode: Mode,
    pub grid_lr: Vec<f64>,
    pub grid_mask_length: Vec<usize>,
    pub grid_epochs: Vec<usize>,
    pub grid_batch_size: Vec<usize>,
    pub grid_prefix_len: Vec<usize>,

    pub probe_mode: Mode,
    pub probe_seed: u64,
    pub probe_k: usize,
    pub probe_questions: usize,
    pub probe_index: rumi_core::probe::IndexMode,
    pub probe_corpus: Option<PathBuf>,
    pub probe_triples: Option<PathBuf>,

    pub target_seed: Option<u64>,
    pub target_jsonl: Option<PathBuf>,
    /// Map words missing from the source vocabulary to `[UNK]` in `ood`
    /// instead of failing.
    pub allow_unknown: bool,

    pub llm_client: String,
    pub llm_task: String,
    pub llm_template: Option<PathBuf>,
    pub llm_samples: usize,
    pub llm_questions: usize,
    pub llm_threads: usize,
    pub llm_timeout_secs: u64,
    pub llm_cache: Option<PathBuf>,

    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            entities: 50,
            facts: 200,
            questions: 500,
            disjoint_eval: true,
            hidden: 32,
            ffn: 128,
            layers: 2,
            heads: 2,
            max_positions: 128,
            activation: Activation::Gelu,
            pretrain_steps: 4000,
            pretrain_lr: 3e-3,
            pretrain_batch_size: 32,
            mask_rate: 0.15,
            position_jitter: 0,
            modes: vec![Mode::Baseline, Mode::RumiConcat, Mode::RumiFfn],
            seeds: vec![0, 1, 2, 3, 4],
            prefix_len: 8,
            mask_length: 3,
            target_layer: None,
            relevance: RelevanceMode::Cosine,
            task: None,
            separate_probes: false,
            lr: 1e-3,
            batch_size: 8,
            epochs: 5,
            templates: None,
            eval_split: "test".into(),
            grid_mode: Mode::RumiFfn,
            grid_lr: Vec::new(),
            grid_mask_length: Vec::new(),
            grid_epochs: Vec::new(),
            grid_batch_size: Vec::new(),
            grid_prefix_len: Vec::new(),
            probe_mode: Mode::RumiFfn,
            probe_seed: 0,
            probe_k: 10,
            probe_questions: 5,
            probe_index: rumi_core::probe::IndexMode::Exact,
            probe_corpus: None,
            probe_triples: None,
            target_seed: None,
            target_jsonl: None,
            allow_unknown: false,
            llm_client: "stub".into(),
            llm_task: "csqa".into(),
            llm_template: None,
            llm_samples: 1,
            llm_questions: 50,
            llm_threads: 1,
            llm_timeout_secs: 30,
            llm_cache: None,
            out_dir: PathBuf::from("runs"),
        }
    }
}

fn parse_value(raw: &str) -> Value {
    let raw = raw.trim();
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Parses `key = value` lines (`#` starts a comment line) or a JSON object.
pub fn parse_entries(text: &str) -> Result<Vec<(String, Value)>> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        let map: Map<String, Value> = serde_json::from_str(trimmed)?;
        return Ok(map.into_iter().collect());
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
        out.push((k.trim().to_string(), parse_value(v)));
    }
    Ok(out)
}

/// Parses one `key=value` override.
pub fn parse_override(s: &str) -> Result<(String, Value)> {
    let (k, v) = s.split_once('=').ok_or_else(|| Error::Config(format!("override {s:?} is not key=value")))?;
    Ok((k.trim().to_string(), parse_value(v)))
}

impl ExperimentConfig {
    /// Defaults, then `entries` in order. Every unknown key, badly typed
    /// value and failed semantic check is reported in one error.
    pub fn from_entries(entries: &[(String, Value)]) -> Result<Self> {
        let defaults = serde_json::to_value(Self::default())?;
        let Value::Object(mut map) = defaults.clone() else { unreachable!("config serializes to an object") };
        let mut problems = Vec::new();
        for (k, v) in entries {
            if !map.contains_key(k) {
                problems.push(format!("unknown key {k:?}"));
                continue;
            }
            let mut probe = defaults.as_object().cloned().unwrap_or_default();
            probe.insert(k.clone(), v.clone());
            if let Err(e) = serde_json::from_value::<Self>(Value::Object(probe)) {
                problems.push(format!("{k}: {e}"));
                continue;
            }
            map.insert(k.clone(), v.clone());
        }
        let cfg: Self = serde_json::from_value(Value::Object(map))?;
        problems.extend(cfg.problems());
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(format!("{} problem(s):\n  - {}", problems.len(), problems.join("\n  - "))))
        }
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut entries = match path {
            Some(p) => parse_entries(&std::fs::read_to_string(p)?)?,
            None => Vec::new(),
        };
        for o in overrides {
            entries.push(parse_override(o)?);
        }
        Self::from_entries(&entries)
    }

    /// Reads command-line style arguments: `--config PATH` plus overrides
    /// written as `key=value`, `--key=value` or `--key value`. Dashes in
    /// keys become underscores.
    pub fn from_args(args: &[String]) -> Result<Self> {
        let mut path = None;
        let mut overrides = Vec::new();
        let mut it = args.iter();
        while let Some(a) = it.next() {
            let (key, inline) = match a.strip_prefix("--") {
                Some(rest) => match rest.split_once('=') {
                    Some((k, v)) => (k.to_string(), Some(v.to_string())),
                    None => (rest.to_string(), None),
                },
                None => match a.split_once('=') {
                    Some((k, v)) => (k.to_string(), Some(v.to_string())),
                    None => return Err(Error::Config(format!("unexpected argument {a:?}"))),
                },
            };
            let key = key.replace('-', "_");
            let value = match inline {
                Some(v) => v,
                None => it.next().cloned().ok_or_else(|| Error::Config(format!("--{key} needs a value")))?,
            };
            if key == "config" {
                path = Some(PathBuf::from(value));
            } else {
                overrides.push(format!("{key}={value}"));
            }
        }
        Self::load(path.as_deref(), &overrides)
    }

    /// Semantic problems, all of them.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if let Err(Error::Config(m)) = self.model_config(1).validate() {
            p.push(m);
        }
        let positive = [
            ("entities", self.entities),
            ("facts", self.facts),
            ("questions", self.questions),
            ("pretrain_batch_size", self.pretrain_batch_size),
            ("mask_length", self.mask_length),
            ("batch_size", self.batch_size),
            ("llm_samples", self.llm_samples),
        ];
        for (name, v) in positive {
            if v == 0 {
                p.push(format!("{name} must be >= 1"));
            }
        }
        for (name, v) in [("lr", self.lr), ("pretrain_lr", self.pretrain_lr)] {
            if !(v > 0.0) {
                p.push(format!("{name} must be > 0"));
            }
        }
        if !(self.mask_rate > 0.0 && self.mask_rate <= 1.0) {
            p.push("mask_rate must be in (0, 1]".into());
        }
        if self.modes.is_empty() {
            p.push("modes must not be empty".into());
        }
        if self.seeds.is_empty() {
            p.push("seeds must not be empty".into());
        }
        if let Some(l) = self.target_layer {
            if l >= self.layers {
                p.push(format!("target_layer {l} is out of range for {} layers", self.layers));
            }
        }
        if self.grid_lr.iter().any(|&v| !(v > 0.0)) {
            p.push("grid_lr values must be > 0".into());
        }
        for (name, list) in [
            ("grid_mask_length", &self.grid_mask_length),
            ("grid_epochs", &self.grid_epochs),
            ("grid_batch_size", &self.grid_batch_size),
        ] {
            if list.contains(&0) && name != "grid_epochs" {
                p.push(format!("{name} values must be >= 1"));
            }
        }
        if !matches!(self.eval_split.as_str(), "train" | "dev" | "test" | "all") {
            p.push(format!("eval_split must be train, dev, test or all, got {:?}", self.eval_split));
        }
        if !matches!(self.llm_client.as_str(), "stub" | "http") {
            p.push(format!("llm_client must be \"stub\" or \"http\", got {:?}", self.llm_client));
        }
        p
    }

    pub fn world_params(&self) -> WorldParams {
        WorldParams {
            disjoint_eval: self.disjoint_eval,
            ..WorldParams::new(self.seed, self.entities, self.facts, self.questions)
        }
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            hidden: self.hidden,
            ffn: self.ffn,
            layers: self.layers,
            heads: self.heads,
            max_positions: self.max_positions,
            activation: self.activation,
            vocab_size,
            seed: self.seed,
        }
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            steps: self.pretrain_steps,
            lr: self.pretrain_lr,
            mask_rate: self.mask_rate,
            batch_size: self.pretrain_batch_size,
            seed: self.seed,
            position_jitter: self.position_jitter,
            checkpoint: None,
        }
    }

    pub fn rumination_config(&self, mode: Mode, seed: u64) -> RuminationConfig {
        RuminationConfig {
            mode,
            prefix_len: self.prefix_len,
            mask_length: self.mask_length,
            target_layer: self.target_layer,
            relevance: self.relevance,
            task: self.task.clone(),
            separate_probes: self.separate_probes,
            seed,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig { lr: self.lr, batch_size: self.batch_size, epochs: self.epochs, seed }
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form, with
    /// the output and cache locations left out.
    pub fn hash(&self) -> String {
        let mut v = self.to_json();
        if let Value::Object(map) = &mut v {
            map.remove("out_dir");
            map.remove("llm_cache");
        }
        let bytes = serde_json::to_vec(&v).expect("config serializes");
        hex::encode(Sha256::digest(bytes))[..16].to_string()
    }

    /// `key = value` rendering that [`ExperimentConfig::load`] reads back.
    pub fn to_kv(&self) -> String {
        let Value::Object(map) = self.to_json() else { unreachable!() };
        map.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.lr = 2e-3;
        cfg.task = Some("sentiment analysis".into());
        cfg.modes = vec![Mode::RumiFfn];
        let back = ExperimentConfig::from_entries(&parse_entries(&cfg.to_kv()).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn strings_need_no_quotes() {
        let e = parse_entries("# comment\nout_dir = /tmp/x\nlr = 0.01\nmodes = [\"baseline\"]\n").unwrap();
        let cfg = ExperimentConfig::from_entries(&e).unwrap();
        assert_eq!(cfg.out_dir, PathBuf::from("/tmp/x"));
        assert_eq!(cfg.lr, 0.01);
        assert_eq!(cfg.modes, vec![Mode::Baseline]);
    }

    #[test]
    fn all_problems_reported_together() {
        let e = vec![
            parse_override("nope=1").unwrap(),
            parse_override("lr=fast").unwrap(),
            parse_override("hidden=30").unwrap(),
            parse_override("heads=4").unwrap(),
            parse_override("seeds=[]").unwrap(),
        ];
        let msg = ExperimentConfig::from_entries(&e).unwrap_err().to_string();
        for needle in ["nope", "lr:", "hidden", "seeds must not be empty"] {
            assert!(msg.contains(needle), "{needle} missing from {msg}");
        }
    }

    #[test]
    fn args_forms() {
        let args: Vec<String> =
            ["--lr", "0.01", "--out-dir=/tmp/r", "seeds=[1,2]"].iter().map(|s| s.to_string()).collect();
        let cfg = ExperimentConfig::from_args(&args).unwrap();
        assert_eq!(cfg.lr, 0.01);
        assert_eq!(cfg.out_dir, PathBuf::from("/tmp/r"));
        assert_eq!(cfg.seeds, vec![1, 2]);
        assert!(ExperimentConfig::from_args(&["--lr".to_string()]).is_err());
    }

    #[test]
    fn json_files_are_accepted() {
        let e = parse_entries(r#"{"epochs": 2, "grid_lr": [0.001, 0.002]}"#).unwrap();
        let cfg = ExperimentConfig::from_entries(&e).unwrap();
        assert_eq!(cfg.epochs, 2);
        assert_eq!(cfg.grid_lr, vec![0.001, 0.002]);
    }
}
