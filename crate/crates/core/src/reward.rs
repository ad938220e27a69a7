//! Synthetic reward functions `f_r(c, z_0)`.

use serde::{Deserialize, Serialize};

use crate::environment::GaussianMixture;
use crate::error::{check_dim, Error, Result};

pub trait Reward {
    fn input_dim(&self) -> Option<usize>;

    fn evaluate(&self, z_0: &[f64]) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardKind {
    /// `-||z_0 - target||^2`
    NegSqDist { target: Vec<f64> },
    /// `log p(z_0)` under the mixture.
    MixtureLogDensity { mixture: GaussianMixture },
    /// 1 when `component` has the largest responsibility for `z_0`, else 0.
    ModeIndicator {
        mixture: GaussianMixture,
        component: usize,
    },
    WeightedSum { terms: Vec<WeightedTerm> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedTerm {
    pub weight: f64,
    pub reward: RewardSpec,
}

/// Optional `scale * r + shift` applied after evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineNormalization {
    pub scale: f64,
    #[serde(default)]
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    #[serde(flatten)]
    pub kind: RewardKind,
    #[serde(default)]
    pub condition: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalize: Option<AffineNormalization>,
}

impl From<RewardKind> for RewardSpec {
    fn from(kind: RewardKind) -> Self {
        Self {
            kind,
            condition: String::new(),
            normalize: None,
        }
    }
}

impl RewardSpec {
    pub fn neg_sq_dist(target: Vec<f64>) -> Self {
        RewardKind::NegSqDist { target }.into()
    }

    pub fn mixture_log_density(mixture: GaussianMixture) -> Self {
        RewardKind::MixtureLogDensity { mixture }.into()
    }

    pub fn mode_indicator(mixture: GaussianMixture, component: usize) -> Result<Self> {
        let spec: Self = RewardKind::ModeIndicator { mixture, component }.into();
        spec.validate()?;
        Ok(spec)
    }

    pub fn weighted_sum(terms: Vec<(RewardSpec, f64)>) -> Result<Self> {
        let terms = terms
            .into_iter()
            .map(|(reward, weight)| WeightedTerm { weight, reward })
            .collect();
        let spec: Self = RewardKind::WeightedSum { terms }.into();
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_at("reward")?;
        // input_dim reports inconsistent member dimensions as an error
        self.checked_dim().map(|_| ())
    }

    fn validate_at(&self, path: &str) -> Result<()> {
        if let Some(n) = self.normalize {
            if !(n.scale.is_finite() && n.shift.is_finite()) {
                return Err(Error::config(format!("{path}.normalize"), "must be finite"));
            }
        }
        match &self.kind {
            RewardKind::NegSqDist { target } => {
                if target.is_empty() || target.iter().any(|t| !t.is_finite()) {
                    return Err(Error::config(
                        format!("{path}.target"),
                        "must be a non-empty finite vector",
                    ));
                }
            }
            RewardKind::MixtureLogDensity { .. } => {}
            RewardKind::ModeIndicator { mixture, component } => {
                if *component >= mixture.num_components() {
                    return Err(Error::config(
                        format!("{path}.component"),
                        format!(
                            "index {component} out of range for {} components",
                            mixture.num_components()
                        ),
                    ));
                }
            }
            RewardKind::WeightedSum { terms } => {
                if terms.is_empty() {
                    return Err(Error::config(format!("{path}.terms"), "must not be empty"));
                }
                for (i, term) in terms.iter().enumerate() {
                    if !term.weight.is_finite() {
                        return Err(Error::config(
                            format!("{path}.terms[{i}].weight"),
                            "must be finite",
                        ));
                    }
                    term.reward.validate_at(&format!("{path}.terms[{i}].reward"))?;
                }
            }
        }
        Ok(())
    }

    fn checked_dim(&self) -> Result<Option<usize>> {
        Ok(match &self.kind {
            RewardKind::NegSqDist { target } => Some(target.len()),
            RewardKind::MixtureLogDensity { mixture } | RewardKind::ModeIndicator { mixture, .. } => {
                Some(mixture.dim())
            }
            RewardKind::WeightedSum { terms } => {
                let mut dim = None;
                for term in terms {
                    if let Some(d) = term.reward.checked_dim()? {
                        match dim {
                            None => dim = Some(d),
                            Some(prev) if prev != d => {
                                return Err(Error::config(
                                    "reward.terms",
                                    format!("members disagree on dimension ({prev} vs {d})"),
                                ))
                            }
                            _ => {}
                        }
                    }
                }
                dim
            }
        })
    }

    fn evaluate_raw(&self, z_0: &[f64]) -> Result<f64> {
        match &self.kind {
            RewardKind::NegSqDist { target } => {
                check_dim("neg_sq_dist reward", target.len(), z_0.len())?;
                Ok(-target
                    .iter()
                    .zip(z_0)
                    .map(|(t, z)| (z - t) * (z - t))
                    .sum::<f64>())
            }
            RewardKind::MixtureLogDensity { mixture } => mixture.log_density(z_0),
            RewardKind::ModeIndicator { mixture, component } => {
                Ok(if mixture.dominant_component(z_0)? == *component {
                    1.0
                } else {
                    0.0
                })
            }
            RewardKind::WeightedSum { terms } => terms.iter().try_fold(0.0, |acc, term| {
                Ok(acc + term.weight * term.reward.evaluate(z_0)?)
            }),
        }
    }
}

impl Reward for RewardSpec {
    fn input_dim(&self) -> Option<usize> {
        self.checked_dim().ok().flatten()
    }

    fn evaluate(&self, z_0: &[f64]) -> Result<f64> {
        if z_0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "reward input contains non-finite values".into(),
            ));
        }
        let raw = self.evaluate_raw(z_0)?;
        let value = match self.normalize {
            Some(n) => n.scale * raw + n.shift,
            None => raw,
        };
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("reward evaluated to {value}")));
        }
        Ok(value)
    }
}
