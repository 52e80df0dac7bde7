#![allow(dead_code)]

use std::path::Path;

use rumi_cli::ExperimentConfig;

/// A world and model small enough to pretrain and train in about a second.
pub fn small(dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        entities: 20,
        facts: 40,
        questions: 60,
        hidden: 8,
        ffn: 16,
        layers: 2,
        heads: 2,
        max_positions: 64,
        pretrain_steps: 20,
        pretrain_batch_size: 8,
        seeds: vec![0, 1],
        prefix_len: 2,
        mask_length: 1,
        epochs: 2,
        batch_size: 8,
        probe_k: 3,
        probe_questions: 2,
        llm_questions: 10,
        out_dir: dir.to_path_buf(),
        ..Default::default()
    }
}
