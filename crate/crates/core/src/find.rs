//! The training loop: sample initial noise, roll out the frozen generator, calibrate
//! rewards with the learned baseline, and update the policy with ratio-clipped
//! policy gradients.

use std::collections::VecDeque;

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drcm::{BaselineNet, DrcmConfig};
use crate::environment::Generator;
use crate::error::{Error, Result};
use crate::optim::{AdamWParams, OptimState};
use crate::policy::{Action, Policy, PolicyGrad, RatioMode};
use crate::reward::Reward;
use crate::smoothing::PlateauRule;

/// Sampling streams for training iterations live above this offset.
const SAMPLE_STREAM_BASE: u64 = 1 << 32;

/// What happens to samples whose ratio leaves `[1 - lambda, 1 + lambda]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipMode {
    /// Weight zero: the sample contributes nothing.
    #[default]
    Drop,
    /// Weight clamped to the nearest band edge.
    Clamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FindConfig {
    /// Latent dimension; 0 means infer it from the generator or reward.
    pub dim: usize,
    pub batch_size: usize,
    pub total_steps: usize,
    pub lr: f64,
    pub lambda: f64,
    pub ratio_mode: RatioMode,
    pub clip_mode: ClipMode,
    /// Number of most recent batches, the current one included, used per update.
    pub replay_window: usize,
    pub inner_epochs: usize,
    pub seed: u64,
    pub log_sigma_floor: f64,
    pub optimizer: AdamWParams,
    pub early_stop: Option<PlateauRule>,
    pub drcm: DrcmConfig,
}

impl Default for FindConfig {
    fn default() -> Self {
        Self {
            dim: 0,
            batch_size: 1,
            total_steps: 150,
            lr: 0.001,
            lambda: 0.02,
            ratio_mode: RatioMode::PerDimGeoMean,
            clip_mode: ClipMode::Drop,
            replay_window: 1,
            inner_epochs: 1,
            seed: 0,
            log_sigma_floor: -10.0,
            optimizer: AdamWParams::default(),
            early_stop: None,
            drcm: DrcmConfig::default(),
        }
    }
}

impl FindConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("find.dim", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("find.batch_size", "must be >= 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("find.lr", "must be positive and finite"));
        }
        // lambda = inf disables clipping
        if self.lambda.is_nan() || self.lambda <= 0.0 {
            return Err(Error::config("find.lambda", "must be > 0"));
        }
        if self.replay_window == 0 {
            return Err(Error::config("find.replay_window", "must be >= 1"));
        }
        if self.inner_epochs == 0 {
            return Err(Error::config("find.inner_epochs", "must be >= 1"));
        }
        if !self.log_sigma_floor.is_finite() {
            return Err(Error::config("find.log_sigma_floor", "must be finite"));
        }
        if let Some(rule) = &self.early_stop {
            if rule.sigma.is_nan() || rule.sigma < 0.0 || rule.window == 0 {
                return Err(Error::config(
                    "find.early_stop",
                    "needs sigma >= 0 and window >= 1",
                ));
            }
        }
        self.optimizer.validate("find.optimizer")?;
        self.drcm.validate()
    }
}

/// One rollout and its calibrated reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub action: Action,
    pub output: Vec<f64>,
    pub reward: f64,
    /// Baseline `r_bar` predicted before this iteration's updates.
    pub baseline: f64,
    /// `reward - baseline`
    pub calibrated: f64,
    /// Log-density of `action` under the policy that sampled it.
    pub logp_old: f64,
    pub iteration: usize,
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iter: usize,
    /// Mean raw reward of the fresh batch.
    pub reward: f64,
    pub baseline: f64,
    pub calibrated: f64,
    pub mean_eta: f64,
    /// Fraction of (record, epoch) pairs whose ratio fell outside the band.
    pub clip_fraction: f64,
    pub mu_norm: f64,
    pub mean_sigma: f64,
    pub drcm_loss: f64,
}

/// Ratio-clipping weight: `eta` inside `[1 - lambda, 1 + lambda]`, otherwise zero.
pub fn rca_sample_weight(eta: f64, lambda: f64) -> f64 {
    if in_band(eta, lambda) {
        eta
    } else {
        0.0
    }
}

/// Clamped variant of [`rca_sample_weight`].
pub fn rca_clamped_weight(eta: f64, lambda: f64) -> f64 {
    eta.clamp((1.0 - lambda).max(0.0), 1.0 + lambda)
}

fn in_band(eta: f64, lambda: f64) -> bool {
    eta >= 1.0 - lambda && eta <= 1.0 + lambda
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    /// Gradient of the clipped surrogate loss (descent direction is its negative).
    pub grad: PolicyGrad,
    pub mean_eta: f64,
    pub clip_fraction: f64,
}

/// Ratio-weighted policy gradient of the clipped surrogate loss.
///
/// Each record contributes `-r* * w(eta) * score(z)` with `eta` the ratio between
/// `policy` and the sampling-time policy; `w` zeroes (or clamps) ratios outside the
/// band. The ratio is a constant weight. Out-of-band records still count in the mean.
pub fn policy_gradient(
    policy: &Policy,
    records: &[SampleRecord],
    lambda: f64,
    ratio_mode: RatioMode,
    clip_mode: ClipMode,
) -> Result<GradientEstimate> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("policy gradient needs at least one record".into()));
    }
    let mut grad = PolicyGrad::zeros(policy.dim());
    let (mut eta_sum, mut clipped) = (0.0, 0usize);
    for rec in records {
        let log_diff = policy.log_prob(&rec.action)? - rec.logp_old;
        let eta = ratio_mode.ratio_from_log_diff(log_diff, policy.dim());
        eta_sum += eta;
        if !in_band(eta, lambda) {
            clipped += 1;
        }
        let weight = match clip_mode {
            ClipMode::Drop => rca_sample_weight(eta, lambda),
            ClipMode::Clamp => rca_clamped_weight(eta, lambda),
        };
        if weight == 0.0 || rec.calibrated == 0.0 {
            continue;
        }
        let score = policy.score(&rec.action)?;
        grad.add_scaled(&score, -rec.calibrated * weight);
    }
    let n = records.len() as f64;
    grad.scale(1.0 / n);
    Ok(GradientEstimate {
        grad,
        mean_eta: eta_sum / n,
        clip_fraction: clipped as f64 / n,
    })
}

/// Plain REINFORCE-with-baseline gradient `-mean(r* * score)`, no ratios.
pub fn reinforce_gradient(policy: &Policy, records: &[SampleRecord]) -> Result<PolicyGrad> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("policy gradient needs at least one record".into()));
    }
    let mut grad = PolicyGrad::zeros(policy.dim());
    for rec in records {
        grad.add_scaled(&policy.score(&rec.action)?, -rec.calibrated);
    }
    grad.scale(1.0 / records.len() as f64);
    Ok(grad)
}

/// Everything the loop carries between iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct FindState {
    pub policy: Policy,
    pub net: BaselineNet,
    pub policy_optim: OptimState,
    /// Previous batches, oldest first, at most `replay_window - 1` of them.
    pub replay: VecDeque<Vec<SampleRecord>>,
    pub iteration: usize,
}

impl FindState {
    /// Fresh state: `N(0, I)` policy and a newly initialized baseline network.
    pub fn initial(config: &FindConfig) -> Result<Self> {
        config.validate()?;
        let policy = Policy::standard(config.dim)?;
        Ok(Self {
            net: BaselineNet::new(config.dim, &config.drcm, config.seed)?,
            policy_optim: OptimState::new(2 * config.dim, config.optimizer),
            policy,
            replay: VecDeque::new(),
            iteration: 0,
        })
    }
}

pub struct StepOutput {
    pub state: FindState,
    pub records: Vec<SampleRecord>,
    pub metrics: IterationMetrics,
}

/// Runs one iteration of the loop from `state`.
///
/// Order: sample `b` actions, generate, score, read `r_bar = g(theta)`, fit `g` on the
/// fresh rewards, form `r* = r - r_bar`, then take `inner_epochs` policy steps over
/// the fresh batch plus up to `replay_window - 1` earlier batches.
pub fn find_step<G, R>(
    state: &FindState,
    config: &FindConfig,
    generator: &G,
    reward: &R,
) -> Result<StepOutput>
where
    G: Generator + Sync + ?Sized,
    R: Reward + Sync + ?Sized,
{
    let iteration = state.iteration;
    let policy = &state.policy;
    let actions = policy.sample_stream(
        config.batch_size,
        config.seed,
        SAMPLE_STREAM_BASE + iteration as u64,
    );
    let rollouts: Vec<(Vec<f64>, f64)> = actions
        .par_iter()
        .map(|a| {
            let out = generator.generate(&a.z)?;
            let r = reward.evaluate(&out)?;
            Ok((out, r))
        })
        .collect::<Result<_>>()?;
    let rewards: Vec<f64> = rollouts.iter().map(|(_, r)| *r).collect();

    let mut net = state.net.clone();
    let (baseline, drcm_loss) = if config.drcm.enabled {
        let baseline = net.predict(policy)?;
        let loss = net.update(policy, &rewards, config.drcm.lr)?;
        (baseline, loss)
    } else {
        (0.0, 0.0)
    };

    let records = actions
        .into_iter()
        .zip(rollouts)
        .map(|(action, (output, reward))| {
            Ok(SampleRecord {
                logp_old: policy.log_prob(&action)?,
                action,
                output,
                reward,
                baseline,
                calibrated: reward - baseline,
                iteration,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut window: Vec<SampleRecord> = state.replay.iter().flatten().cloned().collect();
    window.extend(records.iter().cloned());

    let mut current = policy.clone();
    let mut optim = state.policy_optim.clone();
    let (mut eta_sum, mut clip_sum) = (0.0, 0.0);
    for _ in 0..config.inner_epochs {
        let est = policy_gradient(
            &current,
            &window,
            config.lambda,
            config.ratio_mode,
            config.clip_mode,
        )?;
        eta_sum += est.mean_eta;
        clip_sum += est.clip_fraction;
        let mut params = current.to_flat();
        optim.step(&mut params, &est.grad.to_flat(), config.lr)?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!(
                "policy parameters diverged at iteration {iteration}"
            )));
        }
        current = Policy::from_flat(&params)?.with_log_sigma_floor(config.log_sigma_floor);
    }

    let mut replay = state.replay.clone();
    if config.replay_window > 1 {
        replay.push_back(records.clone());
        while replay.len() > config.replay_window - 1 {
            replay.pop_front();
        }
    }

    let epochs = config.inner_epochs as f64;
    let b = records.len() as f64;
    let metrics = IterationMetrics {
        iter: iteration,
        reward: rewards.iter().sum::<f64>() / b,
        baseline,
        calibrated: records.iter().map(|r| r.calibrated).sum::<f64>() / b,
        mean_eta: eta_sum / epochs,
        clip_fraction: clip_sum / epochs,
        mu_norm: current.mu().iter().map(|m| m * m).sum::<f64>().sqrt(),
        mean_sigma: current.sigma().sum::<f64>() / current.dim() as f64,
        drcm_loss,
    };
    debug!(
        "iter {} reward {:.4} baseline {:.4} clip {:.3}",
        metrics.iter, metrics.reward, metrics.baseline, metrics.clip_fraction
    );

    Ok(StepOutput {
        state: FindState {
            policy: current,
            net,
            policy_optim: optim,
            replay,
            iteration: iteration + 1,
        },
        records,
        metrics,
    })
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: FindState,
    pub trajectory: Vec<IterationMetrics>,
    pub stopped_early: bool,
}

impl RunOutput {
    pub fn policy(&self) -> &Policy {
        &self.state.policy
    }
}

/// Runs `total_steps` iterations from a fresh state, or fewer if the plateau rule fires.
pub fn run<G, R>(config: &FindConfig, generator: &G, reward: &R) -> Result<RunOutput>
where
    G: Generator + Sync + ?Sized,
    R: Reward + Sync + ?Sized,
{
    let state = FindState::initial(config)?;
    run_from(state, config, generator, reward)
}

pub fn run_from<G, R>(
    mut state: FindState,
    config: &FindConfig,
    generator: &G,
    reward: &R,
) -> Result<RunOutput>
where
    G: Generator + Sync + ?Sized,
    R: Reward + Sync + ?Sized,
{
    config.validate()?;
    let mut trajectory = Vec::with_capacity(config.total_steps);
    let mut rewards = Vec::with_capacity(config.total_steps);
    let mut stopped_early = false;
    while state.iteration < config.total_steps {
        let out = find_step(&state, config, generator, reward)?;
        state = out.state;
        rewards.push(out.metrics.reward);
        trajectory.push(out.metrics);
        if let Some(rule) = &config.early_stop {
            if rule.reached(&rewards) {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(RunOutput {
        state,
        trajectory,
        stopped_early,
    })
}
