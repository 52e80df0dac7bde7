use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use rumi_core::backbone::{mlm_accuracy_on_facts, pretrain, EncoderParams};
use rumi_core::data::{generate_world, load_jsonl, words, McqInstance, Split, SyntheticWorld, Vocabulary};
use rumi_core::probe::{
    embed_entries, interpret, load_corpus, load_triples, template_triple, EntrySource, InterpretReport,
    RetrievalIndex,
};
use rumi_core::prompt::PromptTemplates;
use rumi_core::rumination::{evaluate, train, Mode, PreparedInstance, RuminationModel};
use rumi_core::{Error, Result};
use rumi_llm::{run_llm, CachedClient, FewShotTemplate, GenerationClient, HttpClient, StubClient};

use crate::config::ExperimentConfig;
use crate::records::{append_jsonl, metric_rows, write_jsonl, ResultsRecord, RunRecord, SCHEMA_VERSION};
use crate::report::{bar_chart_svg, ood_table, summarize, summary_table};

type Model = RuminationModel<f32>;

/// World, vocabulary and pretrained encoder shared by every run of a config.
pub struct Artifacts {
    pub world: SyntheticWorld,
    pub vocab: Vocabulary,
    pub encoder: EncoderParams<f32>,
    pub templates: PromptTemplates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PretrainManifest {
    key_hash: String,
    world_checksum: String,
    fact_accuracy: f64,
    final_loss: Option<f64>,
}

#[derive(Serialize)]
struct LossRow {
    step: usize,
    loss: f64,
}

fn hash_json(v: &Value) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(v).expect("json serializes")))[..16].to_string()
}

/// Hash of the keys that determine the world and the pretrained encoder.
fn pretrain_key(cfg: &ExperimentConfig) -> String {
    hash_json(&json!({
        "world": cfg.world_params(),
        "model": cfg.model_config(0),
        "pretrain": cfg.pretrain_config(),
        "templates": cfg.templates,
    }))
}

fn templates(cfg: &ExperimentConfig) -> Result<PromptTemplates> {
    match &cfg.templates {
        Some(p) => PromptTemplates::load(p),
        None => Ok(PromptTemplates::default()),
    }
}

fn record(cfg: &ExperimentConfig, command: &str, runs: Vec<RunRecord>, extra: Value, start: Instant) -> ResultsRecord {
    ResultsRecord {
        schema_version: SCHEMA_VERSION,
        command: command.into(),
        config_hash: cfg.hash(),
        config: cfg.to_json(),
        runs,
        extra,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    }
}

fn finish(cfg: &ExperimentConfig, rec: &ResultsRecord) -> Result<()> {
    append_jsonl(&cfg.out_dir.join("results.jsonl"), std::slice::from_ref(rec))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Generates the world, builds the vocabulary and pretrains the encoder.
pub fn cmd_pretrain(cfg: &ExperimentConfig) -> Result<ResultsRecord> {
    let start = Instant::now();
    let out = &cfg.out_dir;
    let world = generate_world(cfg.world_params())?;
    let templates = templates(cfg)?;
    let vocab = Vocabulary::from_texts(world.texts().map(String::from).chain(templates.words()))?;
    let init = EncoderParams::<f32>::init(cfg.model_config(vocab.len()))?;
    let (encoder, report) = pretrain(&init, &world, &vocab, &cfg.pretrain_config())?;
    let fact_accuracy = mlm_accuracy_on_facts(&encoder, &world, &vocab)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("world.json"), world.to_json())?;
    write_json(&out.join("vocab.json"), &vocab)?;
    encoder.save(out.join("encoder.json"))?;
    let rows: Vec<LossRow> = report.losses.iter().enumerate().map(|(i, &loss)| LossRow { step: i + 1, loss }).collect();
    write_jsonl(&out.join("pretrain_metrics.jsonl"), &rows)?;
    let manifest = PretrainManifest {
        key_hash: pretrain_key(cfg),
        world_checksum: world.checksum(),
        fact_accuracy,
        final_loss: report.losses.last().copied(),
    };
    write_json(&out.join("pretrain.json"), &manifest)?;
    let rec = record(cfg, "pretrain", Vec::new(), serde_json::to_value(&manifest)?, start);
    finish(cfg, &rec)?;
    Ok(rec)
}

/// Loads the pretraining artifacts in `cfg.out_dir`; they must have been
/// produced by a config with the same world, model and pretraining keys.
pub fn load_artifacts(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let out = &cfg.out_dir;
    let manifest_path = out.join("pretrain.json");
    if !manifest_path.exists() {
        return Err(Error::Checkpoint(format!(
            "no pretrained encoder in {}; run `rumi pretrain` with this config first",
            out.display()
        )));
    }
    let manifest: PretrainManifest = serde_json::from_str(&std::fs::read_to_string(&manifest_path)?)?;
    if manifest.key_hash != pretrain_key(cfg) {
        return Err(Error::Checkpoint(format!(
            "the encoder in {} was pretrained with different world, model or pretraining settings",
            out.display()
        )));
    }
    let world = SyntheticWorld::from_json(&std::fs::read_to_string(out.join("world.json"))?)?;
    let vocab: Vocabulary = serde_json::from_str(&std::fs::read_to_string(out.join("vocab.json"))?)?;
    let encoder = EncoderParams::load(out.join("encoder.json"))?;
    Ok(Artifacts { world, vocab, encoder, templates: templates(cfg)? })
}

/// Loads the artifacts, pretraining first when none match `cfg`.
pub fn ensure_artifacts(cfg: &ExperimentConfig) -> Result<Artifacts> {
    match load_artifacts(cfg) {
        Ok(a) => Ok(a),
        Err(Error::Checkpoint(_)) => {
            cmd_pretrain(cfg)?;
            load_artifacts(cfg)
        }
        Err(e) => Err(e),
    }
}

fn prepare_all(model: &Model, data: &[McqInstance], mode: Mode) -> Result<Vec<PreparedInstance>> {
    data.iter().map(|i| model.prepare(i, mode)).collect()
}

pub fn model_path(dir: &Path, mode: Mode, seed: u64) -> PathBuf {
    dir.join("models").join(format!("{}-seed{seed}.json", mode.name()))
}

/// Trains every (seed, mode) pair into `dir`; returns runs in seed-major order.
pub fn train_runs(cfg: &ExperimentConfig, art: &Artifacts, dir: &Path) -> Result<Vec<RunRecord>> {
    let world = &art.world;
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        for &mode in &cfg.modes {
            let mut model = Model::new(
                &art.encoder,
                art.vocab.clone(),
                art.templates.clone(),
                cfg.rumination_config(mode, seed),
            )?;
            let tr = prepare_all(&model, world.split(Split::Train), mode)?;
            let dv = prepare_all(&model, world.split(Split::Dev), mode)?;
            let te = prepare_all(&model, world.split(Split::Test), mode)?;
            let curve = train(&mut model, &tr, &dv, &cfg.train_config(seed), mode, |_| {})?;
            let dev_accuracy = if dv.is_empty() { None } else { Some(evaluate(&model, &dv, mode)?.accuracy) };
            let test = evaluate(&model, &te, mode)?;
            model.save(model_path(dir, mode, seed))?;
            runs.push(RunRecord {
                mode,
                seed,
                dev_accuracy,
                test_accuracy: test.accuracy,
                test_loss: test.loss,
                curve,
            });
        }
    }
    Ok(runs)
}

fn write_reports(dir: &Path, prefix: &str, title: &str, runs: &[RunRecord]) -> Result<()> {
    std::fs::write(dir.join(format!("{prefix}.md")), summary_table(title, runs))?;
    std::fs::write(dir.join(format!("{prefix}.svg")), bar_chart_svg(title, runs))?;
    Ok(())
}

/// Trains every mode over every seed, then writes checkpoints,
/// `metrics.jsonl`, `summary.md` and `summary.svg`.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<ResultsRecord> {
    let start = Instant::now();
    let art = load_artifacts(cfg)?;
    let runs = train_runs(cfg, &art, &cfg.out_dir)?;
    write_jsonl(&cfg.out_dir.join("metrics.jsonl"), &metric_rows(&runs))?;
    write_reports(&cfg.out_dir, "summary", "Test accuracy by consolidation mode", &runs)?;
    let extra = json!({ "summary": summarize(&runs) });
    let rec = record(cfg, "train", runs, extra, start);
    finish(cfg, &rec)?;
    Ok(rec)
}

fn eval_set(world: &SyntheticWorld, split: &str) -> Result<Vec<McqInstance>> {
    Ok(match split {
        "train" => world.split(Split::Train).to_vec(),
        "dev" => world.split(Split::Dev).to_vec(),
        "test" => world.split(Split::Test).to_vec(),
        "all" => world.questions().cloned().collect(),
        other => return Err(Error::Config(format!("unknown eval_split {other:?}"))),
    })
}

fn load_model(cfg: &ExperimentConfig, art: &Artifacts, mode: Mode, seed: u64) -> Result<Model> {
    let path = model_path(&cfg.out_dir, mode, seed);
    if !path.exists() {
        return Err(Error::Checkpoint(format!("missing checkpoint {}", path.display())));
    }
    Model::load(&path, art.templates.clone())
}

fn eval_runs(cfg: &ExperimentConfig, art: &Artifacts, data: &[McqInstance]) -> Result<Vec<RunRecord>> {
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        for &mode in &cfg.modes {
            let model = load_model(cfg, art, mode, seed)?;
            let r = evaluate(&model, &prepare_all(&model, data, mode)?, mode)?;
            runs.push(RunRecord {
                mode,
                seed,
                dev_accuracy: None,
                test_accuracy: r.accuracy,
                test_loss: r.loss,
                curve: Vec::new(),
            });
        }
    }
    Ok(runs)
}

#[derive(Serialize)]
struct EvalRow {
    mode: Mode,
    seed: u64,
    split: String,
    loss: f64,
    accuracy: f64,
}

fn eval_rows(runs: &[RunRecord], split: &str) -> Vec<EvalRow> {
    runs.iter()
        .map(|r| EvalRow { mode: r.mode, seed: r.seed, split: split.into(), loss: r.test_loss, accuracy: r.test_accuracy })
        .collect()
}

/// Evaluates saved checkpoints on `eval_split` of the world.
pub fn cmd_eval(cfg: &ExperimentConfig) -> Result<ResultsRecord> {
    let start = Instant::now();
    let art = load_artifacts(cfg)?;
    let data = eval_set(&art.world, &cfg.eval_split)?;
    let runs = eval_runs(cfg, &art, &data)?;
    write_jsonl(&cfg.out_dir.join("eval_metrics.jsonl"), &eval_rows(&runs, &cfg.eval_split))?;
    write_reports(&cfg.out_dir, "eval_summary", &format!("Accuracy on {}", cfg.eval_split), &runs)?;
    let extra = json!({ "split": cfg.eval_split, "questions": data.len(), "summary": summarize(&runs) });
    let rec = record(cfg, "eval", runs, extra, start);
    finish(cfg, &rec)?;
    Ok(rec)
}

/// Words of `data` the vocabulary does not know, sorted and deduplicated.
pub fn unknown_words(vocab: &Vocabulary, data: &[McqInstance]) -> Vec<String> {
    let mut out: Vec<String> = data
        .iter()
        .flat_map(|i| {
            std::iter::once(&i.context).chain(std::iter::once(&i.question)).chain(&i.choices).flat_map(|t| words(t))
        })
        .filter(|w| !vocab.contains(w))
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Zero-shot transfer of the trained checkpoints to another dataset: a
/// JSONL file (`target_jsonl`), a world with another seed (`target_seed`),
/// or the source world's test split when neither is set.
pub fn cmd_ood(cfg: &ExperimentConfig) -> Result<ResultsRecord> {
    let start = Instant::now();
    let art = load_artifacts(cfg)?;
    let (name, target, data) = match (&cfg.target_jsonl, cfg.target_seed) {
        (Some(_), Some(_)) => return Err(Error::Config("set at most one of target_jsonl and target_seed".into())),
        (Some(path), None) => {
            let text = std::fs::read(path)?;
            let t = json!({ "jsonl": path, "sha256": hex::encode(Sha256::digest(&text)) });
            (path.display().to_string(), t, load_jsonl(path)?)
        }
        (None, Some(seed)) => {
            let params = rumi_core::data::WorldParams { seed, ..cfg.world_params() };
            let world = generate_world(params)?;
            (format!("world-seed{seed}"), json!({ "world": params }), world.split(Split::Test).to_vec())
        }
        (None, None) => (
            format!("world-seed{}", cfg.seed),
            json!({ "world": cfg.world_params() }),
            art.world.split(Split::Test).to_vec(),
        ),
    };
    let unknown = unknown_words(&art.vocab, &data);
    if !unknown.is_empty() && !cfg.allow_unknown {
        let shown: Vec<&str> = unknown.iter().take(10).map(String::as_str).collect();
        return Err(Error::Config(format!(
            "target data has {} words outside the source vocabulary (first: {}); set allow_unknown = true to map them to [UNK]",
            unknown.len(),
            shown.join(", ")
        )));
    }
    let runs = eval_runs(cfg, &art, &data)?;
    let source = format!("world-seed{}", cfg.seed);
    let target_hash = hash_json(&target);
    let table = ood_table(&source, &name, &cfg.hash(), &target_hash, &runs);
    write_jsonl(&cfg.out_dir.join("ood_metrics.jsonl"), &eval_rows(&runs, &name))?;
    std::fs::write(cfg.out_dir.join("ood_summary.md"), &table)?;
    let extra = json!({
        "source": source,
        "target": name,
        "target_config": target,
        "target_config_hash": target_hash,
        "unknown_words": unknown.len(),
        "summary": summarize(&runs),
    });
    let rec = record(cfg, "ood", runs, extra, start);
    finish(cfg, &rec)?;
    Ok(rec)
}

fn retrieval_index(
    cfg: &ExperimentConfig,
    art: &Artifacts,
    model: &Model,
    source: EntrySource,
) -> Result<RetrievalIndex<f32>> {
    let texts: Vec<String> = match source {
        EntrySource::Corpus => match &cfg.probe_corpus {
            Some(p) => load_corpus(p)?,
            None => art.world.sentences.clone(),
        },
        EntrySource::Triple => match &cfg.probe_triples {
            Some(p) => load_triples(p)?,
            None => art
                .world
                .facts
                .iter()
                .map(|f| template_triple(&art.world.entities[f.head], "isa", &art.world.entities[f.tail]))
                .collect(),
        },
    };
    let entries = embed_entries(model.reviewing(), &model.vocab, source, &texts)?;
    RetrievalIndex::build(entries, cfg.probe_index, cfg.seed)
}

/// Plain-text rendering with one block per question and one section per space.
pub fn render_probe(reports: &[InterpretReport]) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    for r in reports {
        let _ = writeln!(out, "Q: {}", r.question);
        let _ = writeln!(out, "  vocabulary space:");
        for s in &r.vocabulary {
            let toks: Vec<String> = s.tokens.iter().map(|t| format!("{} ({:.3})", t.token, t.prob)).collect();
            let _ = writeln!(out, "    [{}] {}: {}", s.slot, s.source.prompt, toks.join(", "));
        }
        for (name, section) in [("corpus space", &r.corpus), ("knowledge-base space", &r.triples)] {
            let _ = writeln!(out, "  {name}:");
            if !section.available {
                let _ = writeln!(out, "    (no index)");
            }
            for h in &section.hits {
                let _ = writeln!(out, "    {:.3} {}", h.score, h.text);
            }
        }
        out.push('\n');
    }
    out
}

/// Interprets the knowledge vectors of a trained model for the first
/// `probe_questions` test questions; writes `probe.json` and `probe.txt`.
pub fn cmd_probe(cfg: &ExperimentConfig) -> Result<ResultsRecord> {
    let start = Instant::now();
    if !cfg.probe_mode.ruminates() {
        return Err(Error::Config("probe_mode must be a rumination mode".into()));
    }
    let art = load_artifacts(cfg)?;
    let model = load_model(cfg, &art, cfg.probe_mode, cfg.probe_seed)?;
    let corpus = retrieval_index(cfg, &art, &model, EntrySource::Corpus)?;
    let triples = retrieval_index(cfg, &art, &model, EntrySource::Triple)?;
    let reports = art
        .world
        .split(Split::Test)
        .iter()
        .take(cfg.probe_questions)
        .map(|q| interpret(&model, &q.question, Some(&corpus), Some(&triples), cfg.probe_k))
        .collect::<Result<Vec<_>>>()?;
    write_json(&cfg.out_dir.join("probe.json"), &reports)?;
    std::fs::write(cfg.out_dir.join("probe.txt"), render_probe(&reports))?;
    let extra = json!({ "questions": reports.len(), "corpus_entries": corpus.entries.len(), "triple_entries": triples.entries.len() });
    let rec = record(cfg, "probe", Vec::new(), extra, start);
    finish(cfg, &rec)?;
    Ok(rec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lr: f64,
    pub mask_length: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub prefix_len: usize,
}

impl GridPoint {
    fn apply(&self, cfg: &ExperimentConfig) -> ExperimentConfig {
        ExperimentConfig {
            lr: self.lr,
            mask_length: self.mask_length,
            epochs: self.epochs,
            batch_size: self.batch_size,
            prefix_len: self.prefix_len,
            modes: vec![cfg.grid_mode],
            ..cfg.clone()
        }
    }
}

/// Cartesian product of the grid lists; an empty list keeps the base value.
pub fn grid_points(cfg: &ExperimentConfig) -> Result<Vec<GridPoint>> {
    if cfg.grid_lr.is_empty()
        && cfg.grid_mask_length.is_empty()
        && cfg.grid_epochs.is_empty()
        && cfg.grid_batch_size.is_empty()
        && cfg.grid_prefix_len.is_empty()
    {
        return Err(Error::Config("empty grid: set at least one grid_* list".into()));
    }
    fn or<T: Clone>(list: &[T], base: T) -> Vec<T> {
        if list.is_empty() {
            vec![base]
        } else {
            list.to_vec()
        }
    }
    let mut points = Vec::new();
    for &lr in &or(&cfg.grid_lr, cfg.lr) {
        for &mask_length in &or(&cfg.grid_mask_length, cfg.mask_length) {
            for &epochs in &or(&cfg.grid_epochs, cfg.epochs) {
                for &batch_size in &or(&cfg.grid_batch_size, cfg.batch_size) {
                    for &prefix_len in &or(&cfg.grid_prefix_len, cfg.prefix_len) {
                        points.push(GridPoint { lr, mask_length, epochs, batch_size, prefix_len });
                    }
                }
            }
        }
    }
    Ok(points)
}

/// One line of `grid.jsonl` per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub point: usize,
    pub params: GridPoint,
    pub config_hash: String,
    pub dev_accuracy: f64,
    pub test_accuracy: f64,
    pub runs: Vec<RunRecord>,
}

/// The final line of `grid.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridWinner {
    pub winner: usize,
    pub params: GridPoint,
    pub dev_accuracy: f64,
}

/// Best mean dev accuracy; ties go to the lowest lr, then the smallest
/// mask length, then the earliest point.
pub fn select_winner(records: &[GridRecord]) -> Option<&GridRecord> {
    records.iter().min_by(|a, b| {
        b.dev_accuracy
            .total_cmp(&a.dev_accuracy)
            .then(a.params.lr.total_cmp(&b.params.lr))
            .then(a.params.mask_length.cmp(&b.params.mask_length))
            .then(a.point.cmp(&b.point))
    })
}

/// Trains `grid_mode` at every grid point over all seeds; each point gets
/// its own directory under `grid/`.
pub fn cmd_grid(cfg: &ExperimentConfig) -> Result<ResultsRecord> {
    let start = Instant::now();
    let points = grid_points(cfg)?;
    let art = load_artifacts(cfg)?;
    let mut records = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let pcfg = p.apply(cfg);
        let dir = cfg.out_dir.join("grid").join(format!("point-{i}"));
        std::fs::create_dir_all(&dir)?;
        let runs = train_runs(&pcfg, &art, &dir)?;
        write_jsonl(&dir.join("metrics.jsonl"), &metric_rows(&runs))?;
        let s = summarize(&runs);
        let (dev, test) = s.first().map_or((0.0, 0.0), |s| (s.dev_accuracy.unwrap_or(0.0), s.test_accuracy));
        records.push(GridRecord {
            point: i,
            params: p.clone(),
            config_hash: pcfg.hash(),
            dev_accuracy: dev,
            test_accuracy: test,
            runs,
        });
    }
    let best = select_winner(&records).expect("grid has points");
    let winner = GridWinner { winner: best.point, params: best.params.clone(), dev_accuracy: best.dev_accuracy };
    let path = cfg.out_dir.join("grid.jsonl");
    write_jsonl(&path, &records)?;
    append_jsonl(&path, std::slice::from_ref(&winner))?;
    let runs = records.iter().find(|r| r.point == winner.winner).map(|r| r.runs.clone()).unwrap_or_default();
    let extra = json!({ "points": records.len(), "winner": winner });
    let rec = record(cfg, "grid", runs, extra, start);
    finish(cfg, &rec)?;
    Ok(rec)
}

/// Questions for the LLM path: the world in `out_dir` when present,
/// otherwise a freshly generated one.
fn llm_questions(cfg: &ExperimentConfig) -> Result<Vec<McqInstance>> {
    let path = cfg.out_dir.join("world.json");
    let world = if path.exists() {
        SyntheticWorld::from_json(&std::fs::read_to_string(path)?)?
    } else {
        generate_world(cfg.world_params())?
    };
    Ok(world.questions().take(cfg.llm_questions).cloned().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmSummary {
    pub questions: usize,
    pub accuracy: f64,
    pub cache_hits: usize,
    pub cache_misses: usize,
    pub cached_requests: usize,
}

fn run_llm_with<C: GenerationClient>(cfg: &ExperimentConfig, inner: C) -> Result<(Vec<rumi_llm::LlmAnswer>, LlmSummary)> {
    let template = match &cfg.llm_template {
        Some(p) => FewShotTemplate::load(&cfg.llm_task, p),
        None => FewShotTemplate::builtin(&cfg.llm_task),
    }
    .map_err(|e| Error::Config(e.to_string()))?;
    let dir = cfg.llm_cache.clone().unwrap_or_else(|| cfg.out_dir.join("llm-cache"));
    let client = CachedClient::with_dir(inner, dir).map_err(|e| Error::Config(e.to_string()))?;
    let questions = llm_questions(cfg)?;
    let answers = run_llm(&client, &template, &questions, cfg.llm_samples, cfg.llm_threads)
        .map_err(|e| Error::Generation(e.to_string()))?;
    let correct = answers.iter().filter(|a| a.predicted == a.gold).count();
    let summary = LlmSummary {
        questions: answers.len(),
        accuracy: if answers.is_empty() { 0.0 } else { correct as f64 / answers.len() as f64 },
        cache_hits: client.hits(),
        cache_misses: client.misses(),
        cached_requests: client.len(),
    };
    Ok((answers, summary))
}

/// Generates knowledge with the configured client, answers with it and
/// writes `llm_answers.jsonl`. Every request goes through the on-disk cache.
pub fn cmd_llm_run(cfg: &ExperimentConfig) -> Result<ResultsRecord> {
    let start = Instant::now();
    let (answers, summary) = match cfg.llm_client.as_str() {
        "stub" => run_llm_with(cfg, StubClient)?,
        _ => {
            let client = HttpClient::from_env(Duration::from_secs(cfg.llm_timeout_secs))
                .map_err(|e| Error::Config(e.to_string()))?;
            run_llm_with(cfg, client)?
        }
    };
    std::fs::create_dir_all(&cfg.out_dir)?;
    write_jsonl(&cfg.out_dir.join("llm_answers.jsonl"), &answers)?;
    let rec = record(cfg, "llm-run", Vec::new(), serde_json::to_value(&summary)?, start);
    finish(cfg, &rec)?;
    Ok(rec)
}
