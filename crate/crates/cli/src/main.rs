use anyhow::Context;
use clap::{Parser, Subcommand};

use rumi_cli::report::summary_table;
use rumi_cli::{commands, ExperimentConfig, ResultsRecord};

/// Knowledge rumination experiments.
///
/// Every command takes `--config FILE` and any config key as an override:
/// `--lr 0.002`, `--out-dir=runs/a` or `epochs=3`.
#[derive(Parser)]
#[command(name = "rumi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the world and pretrain the encoder.
    Pretrain(Args),
    /// Train every mode over every seed.
    Train(Args),
    /// Evaluate saved checkpoints.
    Eval(Args),
    /// Evaluate saved checkpoints on another dataset.
    Ood(Args),
    /// Interpret knowledge vectors in vocabulary, corpus and triple space.
    Probe(Args),
    /// Grid search over the grid_* lists.
    Grid(Args),
    /// Knowledge generation and answering with a text generation service.
    LlmRun(Args),
    /// Print the effective configuration.
    Config(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "KEY=VALUE")]
    settings: Vec<String>,
}

fn print_record(rec: &ResultsRecord) {
    println!("{} finished in {:.1}s (config {})", rec.command, rec.wall_clock_secs, rec.config_hash);
    if !rec.runs.is_empty() {
        print!("{}", summary_table(&rec.command, &rec.runs));
    }
    if !rec.extra.is_null() {
        println!("{}", serde_json::to_string_pretty(&rec.extra).unwrap_or_default());
    }
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let (args, run): (&Args, fn(&ExperimentConfig) -> rumi_core::Result<ResultsRecord>) = match &cli.command {
        Command::Pretrain(a) => (a, commands::cmd_pretrain),
        Command::Train(a) => (a, commands::cmd_train),
        Command::Eval(a) => (a, commands::cmd_eval),
        Command::Ood(a) => (a, commands::cmd_ood),
        Command::Probe(a) => (a, commands::cmd_probe),
        Command::Grid(a) => (a, commands::cmd_grid),
        Command::LlmRun(a) => (a, commands::cmd_llm_run),
        Command::Config(a) => {
            let cfg = ExperimentConfig::from_args(&a.settings)?;
            print!("{}", cfg.to_kv());
            return Ok(());
        }
    };
    let cfg = ExperimentConfig::from_args(&args.settings)?;
    let rec = run(&cfg).with_context(|| format!("writing to {}", cfg.out_dir.display()))?;
    print_record(&rec);
    Ok(())
}
