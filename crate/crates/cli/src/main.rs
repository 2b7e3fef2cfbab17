use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use wvf_lab::config::split_overrides;
use wvf_lab::{run, Command, ExperimentConfig};

/// World value function experiments on gridworlds.
///
/// Any configuration key can be overridden with a flag of the same dotted
/// name, e.g. `--learner.episodes 500` or `--planner.planning_steps=20`.
#[derive(Parser)]
#[command(name = "wvf-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train agents over many seeds and write runs, curves and snapshots.
    Learn(Common),
    /// Transfer a WVF zero-shot to new tasks.
    Transfer(Common),
    /// Infer dynamics from a WVF snapshot.
    Plan(Common),
    /// Learn or solve a WVF, then infer dynamics from it.
    InferDynamics(Common),
    /// Solve the task exactly and dump both optimal tables.
    Oracle(Common),
    /// Render a WVF as SVG heatmaps.
    Render(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// First seed of the run.
    #[arg(long)]
    seed: Option<u64>,
    /// Concurrent training runs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    let (args, overrides) = split_overrides(std::env::args().collect())?;
    let cli = Cli::parse_from(args);
    let (command, common) = match cli.command {
        Cmd::Learn(c) => (Command::Learn, c),
        Cmd::Transfer(c) => (Command::Transfer, c),
        Cmd::Plan(c) => (Command::Plan, c),
        Cmd::InferDynamics(c) => (Command::InferDynamics, c),
        Cmd::Oracle(c) => (Command::Oracle, c),
        Cmd::Render(c) => (Command::Render, c),
    };
    let mut config = ExperimentConfig::load(&common.config, &overrides)?;
    if let Some(seed) = common.seed {
        config.first_seed = seed;
    }
    if let Some(out) = common.out {
        config.output_dir = out;
    }
    let report = run(command, &config, common.jobs)?;
    for line in &report.lines {
        println!("{line}");
    }
    for file in &report.files {
        println!("wrote {}", file.display());
    }
    Ok(())
}
