use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use noise_tuner::runner::{self, OracleKind};
use noise_tuner::{load_config, Checkpoint, Error, ExperimentConfig, Policy};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "noise-tuner", version, about = "Optimize the initial-noise distribution of a frozen generator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Overrides the seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to `out_dir` from the config.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the optimizer and write checkpoint, metrics and smoothed-reward files.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Sample from a trained policy and report expected reward and mode hit rate.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to evaluate; the initial N(0, I) policy when omitted.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// Number of fresh samples (config `eval.samples` by default).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Monte-Carlo and finite-difference reference estimates.
    Oracle {
        #[arg(value_enum)]
        kind: OracleArg,
        #[command(flatten)]
        common: Common,
        /// Policy to probe; the initial N(0, I) policy when omitted.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// Number of Monte-Carlo samples.
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        /// Finite-difference step for fd-gradient.
        #[arg(long, default_value_t = 1e-3)]
        h: f64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OracleArg {
    ExpectedReward,
    FdGradient,
    HitRate,
}

impl From<OracleArg> for OracleKind {
    fn from(arg: OracleArg) -> Self {
        match arg {
            OracleArg::ExpectedReward => OracleKind::ExpectedReward,
            OracleArg::FdGradient => OracleKind::FdGradient,
            OracleArg::HitRate => OracleKind::HitRate,
        }
    }
}

fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NOISE_TUNER_LOG", "info"))
        .format_timestamp(None)
        .init();
}

/// Loads the config and applies command-line overrides.
fn prepare(common: &Common) -> anyhow::Result<(ExperimentConfig, PathBuf)> {
    let mut config = load_config(&common.config)?;
    if let Some(seed) = common.seed {
        config.find.seed = seed;
        config.eval.seed = seed;
    }
    let out = common.out.clone().unwrap_or_else(|| config.out_dir.clone());
    Ok((config, out))
}

fn load_policy(checkpoint: Option<&Path>, config: &ExperimentConfig) -> anyhow::Result<Policy> {
    match checkpoint {
        Some(path) => Ok(Checkpoint::load(path)
            .with_context(|| format!("loading checkpoint {}", path.display()))?
            .policy),
        None => Ok(Policy::standard(config.find.dim)?),
    }
}

fn write_json(out: &Path, name: &str, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    println!("{text}");
    fs::create_dir_all(out)?;
    fs::write(out.join(name), text + "\n")?;
    Ok(())
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { common } => {
            let (config, out) = prepare(&common)?;
            info!("training for {} iterations, writing to {}", config.find.total_steps, out.display());
            let art = runner::train(&config, &out)?;
            if art.output.stopped_early {
                info!("stopped early after {} iterations", art.output.trajectory.len());
            }
        }
        Command::Eval { common, checkpoint, n } => {
            let (config, out) = prepare(&common)?;
            let policy = load_policy(checkpoint.as_deref(), &config)?;
            let n = n.unwrap_or(config.eval.samples);
            let report = runner::evaluate(&policy, &config, n, config.eval.seed)?;
            write_json(&out, "eval.json", &report)?;
        }
        Command::Oracle { kind, common, checkpoint, n, h } => {
            let (config, out) = prepare(&common)?;
            let policy = load_policy(checkpoint.as_deref(), &config)?;
            let report = runner::run_oracle(kind.into(), &policy, &config, n, h, config.eval.seed)?;
            write_json(&out, "oracle.json", &report)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let config_error = err
                .downcast_ref::<Error>()
                .is_some_and(Error::is_config_error);
            ExitCode::from(if config_error { EXIT_CONFIG } else { EXIT_RUNTIME })
        }
    }
}
