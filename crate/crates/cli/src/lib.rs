//! Command-line front end: config loading, run directories, and the
//! `train`, `pretrain`, `probe` and `eval` subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod run;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use commands::{ProbeKind, Stage};
use config::RunConfig;
use error::CliError;
use run::{default_run_id, RunDir};

#[derive(Debug, Parser)]
#[command(name = "genac", version, about = "Generative actor-critic laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output root; runs go to `<out>/<run-id>/`.
    #[arg(long, env = "GENAC_OUT_ROOT", default_value = "runs")]
    pub out: PathBuf,
    /// Threads for sampling and critic traces.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Run directory name; defaults to a UTC timestamp plus a config-hash prefix.
    #[arg(long)]
    pub run_id: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an actor with the configured algorithm.
    Train(RunArgs),
    /// Run one critic pretraining stage against the frozen actor.
    Pretrain {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        stage: Stage,
    },
    /// Run a critic probe and write its tables.
    Probe {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        probe: ProbeKind,
    },
    /// avg@16 success of an actor checkpoint.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn load(config: &Path, seed: Option<u64>, workers: Option<usize>) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(w) = workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn open_run(args: &RunArgs) -> Result<(RunConfig, RunDir, String), CliError> {
    let cfg = load(&args.config, args.seed, args.workers)?;
    let hash = cfg.hash()?;
    let id = args.run_id.clone().unwrap_or_else(|| default_run_id(&hash));
    let run = RunDir::create(&args.out, &id)?;
    run.write_snapshot(&cfg, &hash)?;
    Ok((cfg, run, hash))
}

/// Executes one parsed command and returns what to print on success.
pub fn execute(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Train(args) => {
            let (cfg, run, hash) = open_run(&args)?;
            commands::cmd_train(&cfg, &run, &hash)?;
            Ok(run.path.display().to_string())
        }
        Command::Pretrain { run: args, stage } => {
            let (cfg, run, _) = open_run(&args)?;
            commands::cmd_pretrain(&cfg, &run, stage)?;
            Ok(run.path.display().to_string())
        }
        Command::Probe { run: args, probe } => {
            let (cfg, run, _) = open_run(&args)?;
            commands::cmd_probe(&cfg, &run, probe)?;
            Ok(run.path.display().to_string())
        }
        Command::Eval {
            config,
            checkpoint,
            seed,
            workers,
        } => {
            let cfg = load(&config, seed, workers)?;
            let report = commands::cmd_eval(&cfg, &checkpoint)?;
            serde_json::to_string(&report).map_err(|e| CliError::Runtime(e.to_string()))
        }
    }
}
