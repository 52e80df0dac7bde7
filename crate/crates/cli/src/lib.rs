//! Experiment harness behind the `rumi` binary: configuration, the
//! pretrain/train/eval/ood/probe/grid/llm-run commands, results records and
//! summary reports.

pub mod commands;
pub mod config;
pub mod records;
pub mod report;

pub use commands::{
    cmd_eval, cmd_grid, cmd_llm_run, cmd_ood, cmd_pretrain, cmd_probe, cmd_train, grid_points, select_winner,
    GridPoint, GridRecord, GridWinner,
};
pub use config::ExperimentConfig;
pub use records::{ResultsRecord, RunRecord, SCHEMA_VERSION};
