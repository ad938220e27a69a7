//! Policy-gradient tuning of the initial noise distribution of a frozen,
//! deterministic generator.
//!
//! The trainable object is a diagonal Gaussian [`Policy`] over the generator's
//! starting latent. Each iteration samples noise, runs the generator, scores the
//! output with a [`Reward`], calibrates the reward against a learned baseline
//! ([`BaselineNet`]) and takes a ratio-clipped policy-gradient step.
//!
//! [`GeneratorSpec`] includes an exact DDIM sampler over Gaussian-mixture data whose
//! denoiser is available in closed form, and [`oracle`] provides Monte-Carlo and
//! finite-difference estimators that check the optimizer from outside.

pub mod checkpoint;
pub mod config;
pub mod drcm;
pub mod environment;
pub mod error;
pub mod find;
pub mod metrics;
pub mod optim;
pub mod oracle;
pub mod policy;
pub mod reward;
pub mod rng;
pub mod runner;
pub mod smoothing;

pub use checkpoint::Checkpoint;
pub use config::{load_config, ExperimentConfig};
pub use drcm::{BaselineNet, DrcmConfig, InputEncoding};
pub use environment::{
    ddim_step, make_linear_schedule, GaussianMixture, Generator, GeneratorKind, GeneratorSpec,
    NoiseSchedule,
};
pub use error::{Error, Result};
pub use find::{
    find_step, policy_gradient, rca_sample_weight, run, ClipMode, FindConfig, FindState,
    IterationMetrics, SampleRecord,
};
pub use optim::{adamw_step, AdamWParams, OptimState};
pub use oracle::McEstimate;
pub use policy::{density_ratio, Action, Policy, PolicyGrad, RatioMode};
pub use reward::{Reward, RewardKind, RewardSpec};
