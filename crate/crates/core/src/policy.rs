//! Diagonal Gaussian policy over the initial noise of a generator.
//!
//! Each latent element `j` is drawn independently from `N(mu[j], sigma[j]^2)` with
//! `sigma = exp(log_sigma)`. The policy is an immutable value: optimizers build a
//! new `Policy` rather than mutating one in place.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::noise_stream;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Serialization schema version of [`Policy`] documents.
pub const POLICY_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyDocument", into = "PolicyDocument")]
pub struct Policy {
    mu: Vec<f64>,
    log_sigma: Vec<f64>,
}

/// One sampled initial noise vector `z_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub z: Vec<f64>,
}

impl Action {
    pub fn new(z: Vec<f64>) -> Self {
        Self { z }
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }
}

impl From<Vec<f64>> for Action {
    fn from(z: Vec<f64>) -> Self {
        Self { z }
    }
}

/// How the importance ratio between two policies is reduced to a scalar.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioMode {
    /// `exp(log_new - log_old)`, the joint density ratio.
    Full,
    /// `exp((log_new - log_old) / d)`, the per-dimension geometric mean.
    #[default]
    PerDimGeoMean,
}

impl RatioMode {
    /// Maps a joint log-density difference to a ratio.
    pub fn ratio_from_log_diff(self, log_diff: f64, dim: usize) -> f64 {
        match self {
            Self::Full => log_diff.exp(),
            Self::PerDimGeoMean => (log_diff / dim as f64).exp(),
        }
    }
}

/// Gradient of a scalar with respect to `(mu, log_sigma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGrad {
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
}

impl PolicyGrad {
    pub fn zeros(dim: usize) -> Self {
        Self {
            mu: vec![0.0; dim],
            log_sigma: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &PolicyGrad, scale: f64) {
        for (a, b) in self.mu.iter_mut().zip(&other.mu) {
            *a += scale * b;
        }
        for (a, b) in self.log_sigma.iter_mut().zip(&other.log_sigma) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.mu.iter_mut().for_each(|g| *g *= factor);
        self.log_sigma.iter_mut().for_each(|g| *g *= factor);
    }

    /// Concatenation `[mu.., log_sigma..]`, matching [`Policy::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = self.mu.clone();
        flat.extend_from_slice(&self.log_sigma);
        flat
    }
}

impl Policy {
    /// The standard normal `N(0, I)`.
    pub fn standard(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("policy dim must be positive".into()));
        }
        Ok(Self {
            mu: vec![0.0; dim],
            log_sigma: vec![0.0; dim],
        })
    }

    pub fn new(mu: Vec<f64>, log_sigma: Vec<f64>) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::InvalidArgument("policy dim must be positive".into()));
        }
        check_dim("policy log_sigma", mu.len(), log_sigma.len())?;
        if mu.iter().chain(&log_sigma).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "policy parameters must be finite".into(),
            ));
        }
        Ok(Self { mu, log_sigma })
    }

    /// Rebuilds a policy from the flat layout produced by [`Policy::to_flat`].
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if !flat.len().is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "flat policy vector has odd length {}",
                flat.len()
            )));
        }
        let (mu, log_sigma) = flat.split_at(flat.len() / 2);
        Self::new(mu.to_vec(), log_sigma.to_vec())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = self.mu.clone();
        flat.extend_from_slice(&self.log_sigma);
        flat
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn log_sigma(&self) -> &[f64] {
        &self.log_sigma
    }

    pub fn sigma(&self) -> impl Iterator<Item = f64> + '_ {
        self.log_sigma.iter().map(|ls| ls.exp())
    }

    /// Returns a copy with every `log_sigma` entry raised to at least `floor`.
    pub fn with_log_sigma_floor(mut self, floor: f64) -> Self {
        for ls in &mut self.log_sigma {
            if *ls < floor {
                *ls = floor;
            }
        }
        self
    }

    /// Draws `count` i.i.d. actions. Identical `(seed, stream)` gives identical draws.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<Action> {
        self.sample_stream(count, seed, 0)
    }

    pub fn sample_stream(&self, count: usize, seed: u64, stream: u64) -> Vec<Action> {
        let mut rng = noise_stream(seed, stream);
        (0..count).map(|_| self.sample_one(&mut rng)).collect()
    }

    /// Draws one action as `mu + sigma * eps` with `eps ~ N(0, I)` from `rng`.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Action {
        let z = self
            .mu
            .iter()
            .zip(&self.log_sigma)
            .map(|(&m, &ls)| {
                let eps: f64 = rng.sample(StandardNormal);
                m + ls.exp() * eps
            })
            .collect();
        Action { z }
    }

    /// Joint log-density of `action` under this policy.
    pub fn log_prob(&self, action: &Action) -> Result<f64> {
        check_dim("log_prob", self.dim(), action.dim())?;
        Ok(self
            .mu
            .iter()
            .zip(&self.log_sigma)
            .zip(&action.z)
            .map(|((&m, &ls), &z)| {
                let u = (z - m) * (-ls).exp();
                -HALF_LN_2PI - ls - 0.5 * u * u
            })
            .sum())
    }

    /// Analytic gradient of [`Policy::log_prob`] with respect to `(mu, log_sigma)`.
    pub fn score(&self, action: &Action) -> Result<PolicyGrad> {
        check_dim("score", self.dim(), action.dim())?;
        let mut grad = PolicyGrad::zeros(self.dim());
        for j in 0..self.dim() {
            let inv_sigma = (-self.log_sigma[j]).exp();
            let u = (action.z[j] - self.mu[j]) * inv_sigma;
            grad.mu[j] = u * inv_sigma;
            grad.log_sigma[j] = u * u - 1.0;
        }
        Ok(grad)
    }
}

/// Importance ratio `pi_new(z) / pi_old(z)` reduced according to `mode`.
pub fn density_ratio(
    policy_new: &Policy,
    policy_old: &Policy,
    action: &Action,
    mode: RatioMode,
) -> Result<f64> {
    check_dim("density_ratio", policy_new.dim(), policy_old.dim())?;
    let diff = policy_new.log_prob(action)? - policy_old.log_prob(action)?;
    Ok(mode.ratio_from_log_diff(diff, policy_new.dim()))
}

#[derive(Debug, Serialize, Deserialize)]
struct PolicyDocument {
    dim: usize,
    mu: Vec<f64>,
    log_sigma: Vec<f64>,
    format_version: u32,
}

impl TryFrom<PolicyDocument> for Policy {
    type Error = Error;

    fn try_from(doc: PolicyDocument) -> Result<Self> {
        if doc.format_version != POLICY_FORMAT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported policy format_version {}",
                doc.format_version
            )));
        }
        check_dim("policy document mu", doc.dim, doc.mu.len())?;
        Policy::new(doc.mu, doc.log_sigma)
    }
}

impl From<Policy> for PolicyDocument {
    fn from(policy: Policy) -> Self {
        Self {
            dim: policy.dim(),
            mu: policy.mu,
            log_sigma: policy.log_sigma,
            format_version: POLICY_FORMAT_VERSION,
        }
    }
}
