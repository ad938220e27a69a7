//! Train, evaluate and oracle entry points behind the command-line tool.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::ExperimentConfig;
use crate::environment::{GaussianMixture, GeneratorKind};
use crate::error::{Error, Result};
use crate::find::{find_step, FindState, IterationMetrics, RunOutput};
use crate::metrics::{write_metrics_csv, write_smoothed_csv};
use crate::oracle::{self, GradientEstimates, McEstimate};
use crate::policy::Policy;
use crate::reward::{RewardKind, RewardSpec};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SMOOTHED_FILE: &str = "smoothed.csv";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";

#[derive(Debug, Clone)]
pub struct TrainArtifacts {
    pub out_dir: PathBuf,
    pub output: RunOutput,
}

/// Runs the optimizer and writes checkpoint, metrics and smoothed-trajectory files.
pub fn train(config: &ExperimentConfig, out_dir: &Path) -> Result<TrainArtifacts> {
    let find = &config.find;
    let mut state = FindState::initial(find)?;
    let mut trajectory: Vec<IterationMetrics> = Vec::with_capacity(find.total_steps);
    let mut stopped_early = false;
    while state.iteration < find.total_steps {
        let step = find_step(&state, find, &config.generator, &config.reward)?;
        state = step.state;
        let m = step.metrics;
        if (m.iter + 1) % config.log_every == 0 || m.iter + 1 == find.total_steps {
            info!(
                "iter {:>5}  reward {:>10.5}  baseline {:>10.5}  clip {:.3}  |mu| {:.4}  sigma {:.4}",
                m.iter, m.reward, m.baseline, m.clip_fraction, m.mu_norm, m.mean_sigma
            );
        }
        trajectory.push(m);
        if let Some(rule) = &find.early_stop {
            let rewards: Vec<f64> = trajectory.iter().map(|m| m.reward).collect();
            if rule.reached(&rewards) {
                info!("reward plateau reached after {} iterations", trajectory.len());
                stopped_early = true;
                break;
            }
        }
    }

    fs::create_dir_all(out_dir)?;
    Checkpoint::from_state(&state, find.seed).save(out_dir.join(CHECKPOINT_FILE))?;
    write_metrics_csv(
        BufWriter::new(fs::File::create(out_dir.join(METRICS_FILE))?),
        &trajectory,
    )?;
    write_smoothed_csv(
        BufWriter::new(fs::File::create(out_dir.join(SMOOTHED_FILE))?),
        &trajectory,
    )?;
    fs::write(out_dir.join(RESOLVED_CONFIG_FILE), config.to_toml_string()?)?;

    Ok(TrainArtifacts {
        out_dir: out_dir.to_path_buf(),
        output: RunOutput {
            state,
            trajectory,
            stopped_early,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub seed: u64,
    pub expected_reward: McEstimate,
    /// Present when the reward targets a mixture component.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hit_rate: Option<McEstimate>,
    /// Mean log-density of outputs under the generator's data mixture.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_log_density: Option<McEstimate>,
}

fn target_mode(reward: &RewardSpec) -> Option<(&GaussianMixture, usize)> {
    match &reward.kind {
        RewardKind::ModeIndicator { mixture, component } => Some((mixture, *component)),
        RewardKind::WeightedSum { terms } => terms.iter().find_map(|t| target_mode(&t.reward)),
        _ => None,
    }
}

/// Draws `samples` fresh rollouts from `policy` and summarizes them.
pub fn evaluate(policy: &Policy, config: &ExperimentConfig, samples: usize, seed: u64) -> Result<EvalReport> {
    if samples < 2 {
        return Err(Error::InvalidArgument(format!(
            "evaluation needs at least 2 samples, got {samples}"
        )));
    }
    if policy.dim() != config.find.dim {
        return Err(Error::DimensionMismatch {
            context: "checkpoint policy vs config",
            expected: config.find.dim,
            actual: policy.dim(),
        });
    }
    let generator = &config.generator;
    let expected_reward = oracle::expected_reward(policy, generator, &config.reward, samples, seed)?;
    let hit_rate = target_mode(&config.reward)
        .map(|(mixture, k)| oracle::mode_hit_rate(policy, generator, mixture, k, samples, seed))
        .transpose()?;
    let output_log_density = match &generator.kind {
        GeneratorKind::ExactDdim { mixture, .. } => Some(oracle::expected_reward(
            policy,
            generator,
            &RewardSpec::mixture_log_density(mixture.clone()),
            samples,
            seed,
        )?),
        _ => None,
    };
    Ok(EvalReport {
        samples,
        seed,
        expected_reward,
        hit_rate,
        output_log_density,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "oracle", rename_all = "snake_case")]
pub enum OracleReport {
    ExpectedReward {
        n: usize,
        seed: u64,
        estimate: McEstimate,
    },
    FdGradient {
        n: usize,
        seed: u64,
        h: f64,
        gradient: GradientEstimates,
    },
    HitRate {
        n: usize,
        seed: u64,
        component: usize,
        estimate: McEstimate,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleKind {
    ExpectedReward,
    FdGradient,
    HitRate,
}

/// Runs one oracle estimate for `policy` under the experiment's generator and reward.
pub fn run_oracle(
    kind: OracleKind,
    policy: &Policy,
    config: &ExperimentConfig,
    n: usize,
    h: f64,
    seed: u64,
) -> Result<OracleReport> {
    let (generator, reward) = (&config.generator, &config.reward);
    Ok(match kind {
        OracleKind::ExpectedReward => OracleReport::ExpectedReward {
            n,
            seed,
            estimate: oracle::expected_reward(policy, generator, reward, n, seed)?,
        },
        OracleKind::FdGradient => OracleReport::FdGradient {
            n,
            seed,
            h,
            gradient: oracle::fd_objective_gradient(policy, generator, reward, n, h, seed)?,
        },
        OracleKind::HitRate => {
            let (mixture, component) = target_mode(reward).ok_or_else(|| {
                Error::config("reward", "hit-rate oracle needs a mode_indicator reward")
            })?;
            OracleReport::HitRate {
                n,
                seed,
                component,
                estimate: oracle::mode_hit_rate(policy, generator, mixture, component, n, seed)?,
            }
        }
    })
}
