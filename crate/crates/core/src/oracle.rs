//! Brute-force Monte-Carlo and finite-difference estimators used to check the
//! optimizer independently of its own gradient path.
//!
//! All estimators are reproducible: samples come from seeded streams and are
//! reduced in a fixed order.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{GaussianMixture, Generator};
use crate::error::{Error, Result};
use crate::policy::{Action, Policy};
use crate::reward::Reward;
use crate::rng::{noise_stream, pairwise_sum};

const COMPONENT_STREAM: u64 = 0xC0_0000;

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl McEstimate {
    pub fn from_samples(values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(Error::InvalidArgument(
                "Monte-Carlo estimate needs at least two samples".into(),
            ));
        }
        let mean = pairwise_sum(values) / n as f64;
        let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        let var = pairwise_sum(&sq) / (n - 1) as f64;
        Ok(Self {
            mean,
            stderr: (var / n as f64).sqrt(),
            n,
        })
    }

    /// `|mean - value| <= k * stderr`
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.stderr
    }
}

/// Per-component estimates of a gradient with respect to `(mu, log_sigma)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimates {
    pub mu: Vec<McEstimate>,
    pub log_sigma: Vec<McEstimate>,
}

impl GradientEstimates {
    pub fn iter(&self) -> impl Iterator<Item = &McEstimate> {
        self.mu.iter().chain(&self.log_sigma)
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need n >= 2 samples, got {n}")));
    }
    Ok(())
}

fn rewards_of<G, R>(actions: &[Action], generator: &G, reward: &R) -> Result<Vec<f64>>
where
    G: Generator + Sync + ?Sized,
    R: Reward + Sync + ?Sized,
{
    actions
        .par_iter()
        .map(|a| reward.evaluate(&generator.generate(&a.z)?))
        .collect()
}

/// Estimate of `E_{z ~ policy}[f_r(G(z))]` from `n` rollouts.
pub fn expected_reward<G, R>(
    policy: &Policy,
    generator: &G,
    reward: &R,
    n: usize,
    seed: u64,
) -> Result<McEstimate>
where
    G: Generator + Sync + ?Sized,
    R: Reward + Sync + ?Sized,
{
    check_n(n)?;
    let actions = policy.sample(n, seed);
    McEstimate::from_samples(&rewards_of(&actions, generator, reward)?)
}

/// Score-function estimate of `grad E[r]`: the per-sample values `(r - baseline) * score`.
pub fn score_function_gradient<G, R>(
    policy: &Policy,
    generator: &G,
    reward: &R,
    baseline: f64,
    n: usize,
    seed: u64,
) -> Result<GradientEstimates>
where
    G: Generator + Sync + ?Sized,
    R: Reward + Sync + ?Sized,
{
    check_n(n)?;
    let actions = policy.sample(n, seed);
    let rewards = rewards_of(&actions, generator, reward)?;
    let d = policy.dim();
    let mut columns = vec![Vec::with_capacity(n); 2 * d];
    for (a, r) in actions.iter().zip(&rewards) {
        for (k, s) in policy.score(a)?.to_flat().into_iter().enumerate() {
            columns[k].push((r - baseline) * s);
        }
    }
    split_columns(&columns, d)
}

fn split_columns(columns: &[Vec<f64>], d: usize) -> Result<GradientEstimates> {
    let est = columns
        .iter()
        .map(|c| McEstimate::from_samples(c))
        .collect::<Result<Vec<_>>>()?;
    Ok(GradientEstimates {
        mu: est[..d].to_vec(),
        log_sigma: est[d..].to_vec(),
    })
}

/// Central difference `(f(x + h) - f(x - h)) / 2h`.
pub fn central_difference<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Finite-difference gradient of the expected reward with common random numbers.
///
/// Standard normal draws `eps` are shared by the `+h` and `-h` evaluations, so each
/// sample yields `(f(z+) - f(z-)) / 2h` with `z = mu + exp(log_sigma) * eps`.
pub fn fd_objective_gradient<G, R>(
    policy: &Policy,
    generator: &G,
    reward: &R,
    n: usize,
    h: f64,
    seed: u64,
) -> Result<GradientEstimates>
where
    G: Generator + Sync + ?Sized,
    R: Reward + Sync + ?Sized,
{
    check_n(n)?;
    if h.is_nan() || h <= 0.0 {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    let d = policy.dim();
    let eps = Policy::standard(d)?.sample(n, seed);
    let base = policy.to_flat();
    let columns = (0..2 * d)
        .map(|k| {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[k] += h;
            minus[k] -= h;
            let (plus, minus) = (Policy::from_flat(&plus)?, Policy::from_flat(&minus)?);
            eps.par_iter()
                .map(|e| {
                    let fp = reward.evaluate(&generator.generate(&reparam(&plus, e))?)?;
                    let fm = reward.evaluate(&generator.generate(&reparam(&minus, e))?)?;
                    Ok((fp - fm) / (2.0 * h))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    split_columns(&columns, d)
}

fn reparam(policy: &Policy, eps: &Action) -> Vec<f64> {
    policy
        .mu()
        .iter()
        .zip(policy.log_sigma())
        .zip(&eps.z)
        .map(|((m, ls), e)| m + ls.exp() * e)
        .collect()
}

/// Fraction of rollouts whose output is dominated by component `target`.
pub fn mode_hit_rate<G>(
    policy: &Policy,
    generator: &G,
    mixture: &GaussianMixture,
    target: usize,
    n: usize,
    seed: u64,
) -> Result<McEstimate>
where
    G: Generator + Sync + ?Sized,
{
    check_n(n)?;
    if target >= mixture.num_components() {
        return Err(Error::InvalidArgument(format!("component {target} out of range")));
    }
    let actions = policy.sample(n, seed);
    let hits = actions
        .par_iter()
        .map(|a| {
            let out = generator.generate(&a.z)?;
            Ok(if mixture.dominant_component(&out)? == target {
                1.0
            } else {
                0.0
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    McEstimate::from_samples(&hits)
}

/// Mean mixture log-density of exact samples from component `component`.
pub fn component_log_density(
    mixture: &GaussianMixture,
    component: usize,
    n: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_n(n)?;
    let single = mixture.component(component)?;
    let mut rng = noise_stream(seed, COMPONENT_STREAM);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let values = (0..n)
        .map(|_| {
            let x: Vec<f64> = single.means()[0]
                .iter()
                .zip(&single.stds()[0])
                .map(|(m, s)| m + s * std_normal.sample(&mut rng))
                .collect();
            mixture.log_density(&x)
        })
        .collect::<Result<Vec<f64>>>()?;
    McEstimate::from_samples(&values)
}
