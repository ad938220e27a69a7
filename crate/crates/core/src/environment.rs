//! Deterministic generators mapping initial noise `z_T` to an output `z_0`.
//!
//! The `exact_ddim` generator runs a zero-variance DDIM reverse chain whose
//! denoiser is the closed-form posterior mean of Gaussian-mixture data, so every
//! rollout is exact and reproducible without a neural network.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::policy::Action;

/// A frozen generator: a pure function of the initial noise.
pub trait Generator {
    /// Latent dimension the generator accepts, when it fixes one.
    fn input_dim(&self) -> Option<usize>;

    fn generate(&self, z_t: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearBetas {
    pub steps: usize,
    #[serde(default = "default_beta_min")]
    pub beta_min: f64,
    #[serde(default = "default_beta_max")]
    pub beta_max: f64,
}

fn default_beta_min() -> f64 {
    1e-4
}

fn default_beta_max() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum ScheduleDocument {
    Linear(LinearBetas),
    Explicit { alpha_bar: Vec<f64> },
}

/// Cumulative signal coefficients `alpha_bar[t]` for `t = 0..=T`, with `alpha_bar[0] = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleDocument", into = "ScheduleDocument")]
pub struct NoiseSchedule {
    alpha_bar: Vec<f64>,
    betas: Option<LinearBetas>,
}

impl NoiseSchedule {
    pub fn from_alpha_bar(alpha_bar: Vec<f64>) -> Result<Self> {
        if alpha_bar.len() < 2 {
            return Err(Error::InvalidArgument(
                "schedule needs at least one diffusion step".into(),
            ));
        }
        if alpha_bar[0] != 1.0 {
            return Err(Error::InvalidArgument("alpha_bar[0] must be exactly 1".into()));
        }
        if alpha_bar.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
            return Err(Error::InvalidArgument("alpha_bar entries must lie in (0, 1]".into()));
        }
        if alpha_bar.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidArgument(
                "alpha_bar must be strictly decreasing".into(),
            ));
        }
        Ok(Self {
            alpha_bar,
            betas: None,
        })
    }

    /// Linearly spaced `beta_t` from `beta_min` to `beta_max`, `a_t = 1 - beta_t`.
    pub fn linear(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidArgument("schedule steps must be >= 1".into()));
        }
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < beta_min <= beta_max < 1, got {beta_min}, {beta_max}"
            )));
        }
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        alpha_bar.push(1.0);
        let mut acc = 1.0;
        for i in 0..steps {
            let frac = if steps == 1 {
                0.0
            } else {
                i as f64 / (steps - 1) as f64
            };
            let beta = beta_min + (beta_max - beta_min) * frac;
            acc *= 1.0 - beta;
            alpha_bar.push(acc);
        }
        let mut schedule = Self::from_alpha_bar(alpha_bar)?;
        schedule.betas = Some(LinearBetas {
            steps,
            beta_min,
            beta_max,
        });
        Ok(schedule)
    }

    /// Number of diffusion steps `T`.
    pub fn steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn alpha_bar(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn at(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }
}

/// Free-function form of [`NoiseSchedule::linear`].
pub fn make_linear_schedule(steps: usize, beta_min: f64, beta_max: f64) -> Result<NoiseSchedule> {
    NoiseSchedule::linear(steps, beta_min, beta_max)
}

impl TryFrom<ScheduleDocument> for NoiseSchedule {
    type Error = Error;

    fn try_from(doc: ScheduleDocument) -> Result<Self> {
        match doc {
            ScheduleDocument::Linear(b) => Self::linear(b.steps, b.beta_min, b.beta_max),
            ScheduleDocument::Explicit { alpha_bar } => Self::from_alpha_bar(alpha_bar),
        }
    }
}

impl From<NoiseSchedule> for ScheduleDocument {
    fn from(s: NoiseSchedule) -> Self {
        match s.betas {
            Some(b) => ScheduleDocument::Linear(b),
            None => ScheduleDocument::Explicit {
                alpha_bar: s.alpha_bar,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MixtureDocument {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    stds: Vec<Vec<f64>>,
}

/// Weighted Gaussian components with per-dimension standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureDocument", into = "MixtureDocument")]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    stds: Vec<Vec<f64>>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, stds: Vec<Vec<f64>>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::InvalidArgument("mixture needs at least one component".into()));
        }
        check_dim("mixture means", k, means.len())?;
        check_dim("mixture stds", k, stds.len())?;
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("mixture weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        let d = means[0].len();
        if d == 0 {
            return Err(Error::InvalidArgument("mixture dimension must be positive".into()));
        }
        for (m, s) in means.iter().zip(&stds) {
            check_dim("mixture component mean", d, m.len())?;
            check_dim("mixture component std", d, s.len())?;
            if m.iter().any(|v| !v.is_finite()) || s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::InvalidArgument(
                    "mixture means must be finite and stds positive".into(),
                ));
            }
        }
        Ok(Self {
            weights,
            means,
            stds,
        })
    }

    /// Single component with isotropic std.
    pub fn single(mean: Vec<f64>, std: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(vec![1.0], vec![mean], vec![vec![std; d]])
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn stds(&self) -> &[Vec<f64>] {
        &self.stds
    }

    /// Mixture of the same components restricted to component `k` alone.
    pub fn component(&self, k: usize) -> Result<Self> {
        if k >= self.num_components() {
            return Err(Error::InvalidArgument(format!("component index {k} out of range")));
        }
        Self::new(vec![1.0], vec![self.means[k].clone()], vec![self.stds[k].clone()])
    }

    /// `sum_k w_k m_k`
    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (w, m) in self.weights.iter().zip(&self.means) {
            for (o, v) in out.iter_mut().zip(m) {
                *o += w * v;
            }
        }
        out
    }

    /// Per-component `log w_k + log N(z_t; sqrt(ab) m_k, ab s_k^2 + 1 - ab)`.
    fn component_log_likelihoods(&self, z_t: &[f64], alpha_bar_t: f64) -> Result<Vec<f64>> {
        check_dim("mixture input", self.dim(), z_t.len())?;
        check_alpha_bar(alpha_bar_t)?;
        let sqrt_ab = alpha_bar_t.sqrt();
        let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        Ok(self
            .weights
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(&w, (m, s))| {
                if w == 0.0 {
                    return f64::NEG_INFINITY;
                }
                let mut acc = w.ln();
                for j in 0..z_t.len() {
                    let var = alpha_bar_t * s[j] * s[j] + (1.0 - alpha_bar_t);
                    let r = z_t[j] - sqrt_ab * m[j];
                    acc -= half_ln_2pi + 0.5 * var.ln() + 0.5 * r * r / var;
                }
                acc
            })
            .collect())
    }

    /// Posterior component probabilities given the noised observation `z_t`.
    pub fn responsibilities(&self, z_t: &[f64], alpha_bar_t: f64) -> Result<Vec<f64>> {
        let mut logs = self.component_log_likelihoods(z_t, alpha_bar_t)?;
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for l in &mut logs {
            *l = (*l - max).exp();
            total += *l;
        }
        logs.iter_mut().for_each(|r| *r /= total);
        Ok(logs)
    }

    /// `log p(x)` of clean data under the mixture.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        let logs = self.component_log_likelihoods(x, 1.0)?;
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln())
    }

    /// Index of the component with the largest responsibility for clean data `x`.
    pub fn dominant_component(&self, x: &[f64]) -> Result<usize> {
        let logs = self.component_log_likelihoods(x, 1.0)?;
        Ok(logs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, &l)| {
                if l > best.1 {
                    (k, l)
                } else {
                    best
                }
            })
            .0)
    }

    /// Exact `E[z_0 | z_t]` for data drawn from this mixture.
    pub fn posterior_mean(&self, z_t: &[f64], alpha_bar_t: f64) -> Result<Vec<f64>> {
        let resp = self.responsibilities(z_t, alpha_bar_t)?;
        let sqrt_ab = alpha_bar_t.sqrt();
        let mut out = vec![0.0; z_t.len()];
        for (k, r) in resp.iter().enumerate() {
            if *r == 0.0 {
                continue;
            }
            let (m, s) = (&self.means[k], &self.stds[k]);
            for j in 0..z_t.len() {
                let s2 = s[j] * s[j];
                let gain = sqrt_ab * s2 / (alpha_bar_t * s2 + 1.0 - alpha_bar_t);
                out[j] += r * (m[j] + gain * (z_t[j] - sqrt_ab * m[j]));
            }
        }
        Ok(out)
    }
}

impl TryFrom<MixtureDocument> for GaussianMixture {
    type Error = Error;

    fn try_from(doc: MixtureDocument) -> Result<Self> {
        Self::new(doc.weights, doc.means, doc.stds)
    }
}

impl From<GaussianMixture> for MixtureDocument {
    fn from(m: GaussianMixture) -> Self {
        Self {
            weights: m.weights,
            means: m.means,
            stds: m.stds,
        }
    }
}

fn check_alpha_bar(alpha_bar_t: f64) -> Result<()> {
    if !(alpha_bar_t > 0.0 && alpha_bar_t <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha_bar must lie in (0, 1], got {alpha_bar_t}"
        )));
    }
    Ok(())
}

/// Zero-variance DDIM update from noise level `alpha_bar_t` to `alpha_bar_prev`
/// given a clean-data prediction `x0_hat`.
pub fn ddim_update(z_t: &[f64], x0_hat: &[f64], alpha_bar_t: f64, alpha_bar_prev: f64) -> Vec<f64> {
    let (sa_t, sn_t) = (alpha_bar_t.sqrt(), (1.0 - alpha_bar_t).sqrt());
    let (sa_p, sn_p) = (alpha_bar_prev.sqrt(), (1.0 - alpha_bar_prev).sqrt());
    z_t.iter()
        .zip(x0_hat)
        .map(|(&z, &x0)| {
            let eps = (z - sa_t * x0) / sn_t;
            sa_p * x0 + sn_p * eps
        })
        .collect()
}

/// One reverse step `t -> t_prev` with the exact mixture denoiser.
pub fn ddim_step(
    mixture: &GaussianMixture,
    schedule: &NoiseSchedule,
    z_t: &[f64],
    t: usize,
    t_prev: usize,
) -> Result<Vec<f64>> {
    if !(t_prev < t && t <= schedule.steps()) {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= t_prev < t <= T, got t={t}, t_prev={t_prev}"
        )));
    }
    let (ab_t, ab_prev) = (schedule.at(t), schedule.at(t_prev));
    let x0_hat = mixture.posterior_mean(z_t, ab_t)?;
    Ok(ddim_update(z_t, &x0_hat, ab_t, ab_prev))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    Identity,
    Linear {
        matrix: Vec<Vec<f64>>,
        offset: Vec<f64>,
    },
    ExactDdim {
        mixture: GaussianMixture,
        schedule: NoiseSchedule,
        #[serde(default = "default_stride")]
        stride: usize,
    },
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub kind: GeneratorKind,
    /// Opaque condition label carried through to rewards.
    #[serde(default)]
    pub condition: String,
}

impl GeneratorSpec {
    pub fn identity() -> Self {
        Self {
            kind: GeneratorKind::Identity,
            condition: String::new(),
        }
    }

    pub fn linear(matrix: Vec<Vec<f64>>, offset: Vec<f64>) -> Result<Self> {
        let spec = Self {
            kind: GeneratorKind::Linear { matrix, offset },
            condition: String::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn exact_ddim(mixture: GaussianMixture, schedule: NoiseSchedule, stride: usize) -> Result<Self> {
        let spec = Self {
            kind: GeneratorKind::ExactDdim {
                mixture,
                schedule,
                stride,
            },
            condition: String::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks structural invariants, reporting the offending field.
    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            GeneratorKind::Identity => Ok(()),
            GeneratorKind::Linear { matrix, offset } => {
                let d = offset.len();
                if d == 0 {
                    return Err(Error::config("generator.offset", "must be non-empty"));
                }
                if matrix.len() != d || matrix.iter().any(|row| row.len() != d) {
                    return Err(Error::config(
                        "generator.matrix",
                        format!("must be {d}x{d} to match the offset"),
                    ));
                }
                if matrix.iter().flatten().chain(offset).any(|v| !v.is_finite()) {
                    return Err(Error::config("generator.matrix", "entries must be finite"));
                }
                Ok(())
            }
            GeneratorKind::ExactDdim {
                schedule, stride, ..
            } => {
                if *stride == 0 || schedule.steps() % stride != 0 {
                    return Err(Error::config(
                        "generator.stride",
                        format!("must divide the {} schedule steps", schedule.steps()),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Timesteps visited by the strided reverse chain, `T, T - stride, ..., 0`.
    pub fn timesteps(&self) -> Vec<usize> {
        match &self.kind {
            GeneratorKind::ExactDdim {
                schedule, stride, ..
            } => (0..=schedule.steps()).rev().step_by(*stride).collect(),
            _ => Vec::new(),
        }
    }

    pub fn generate_action(&self, z_t: &Action) -> Result<Vec<f64>> {
        self.generate(&z_t.z)
    }
}

impl Generator for GeneratorSpec {
    fn input_dim(&self) -> Option<usize> {
        match &self.kind {
            GeneratorKind::Identity => None,
            GeneratorKind::Linear { offset, .. } => Some(offset.len()),
            GeneratorKind::ExactDdim { mixture, .. } => Some(mixture.dim()),
        }
    }

    fn generate(&self, z_t: &[f64]) -> Result<Vec<f64>> {
        if let Some(d) = self.input_dim() {
            check_dim("generate", d, z_t.len())?;
        }
        match &self.kind {
            GeneratorKind::Identity => Ok(z_t.to_vec()),
            GeneratorKind::Linear { matrix, offset } => Ok(matrix
                .iter()
                .zip(offset)
                .map(|(row, b)| row.iter().zip(z_t).map(|(a, z)| a * z).sum::<f64>() + b)
                .collect()),
            GeneratorKind::ExactDdim {
                mixture,
                schedule,
                stride,
            } => {
                let mut z = z_t.to_vec();
                let mut t = schedule.steps();
                while t > 0 {
                    let t_prev = t - stride;
                    z = ddim_step(mixture, schedule, &z, t, t_prev)?;
                    t = t_prev;
                }
                Ok(z)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Policy;
    use proptest::prelude::*;

    fn two_modes(w0: f64, m0: f64, m1: f64) -> GaussianMixture {
        GaussianMixture::new(
            vec![w0, 1.0 - w0],
            vec![vec![m0], vec![m1]],
            vec![vec![1.0], vec![1.0]],
        )
        .unwrap()
    }

    #[test]
    fn linear_schedule_examples() {
        let s = make_linear_schedule(1, 0.01, 0.01).unwrap();
        assert_eq!(s.alpha_bar(), &[1.0, 0.99]);
        let s = make_linear_schedule(2, 0.1, 0.1).unwrap();
        assert_eq!(s.steps(), 2);
        assert!((s.at(1) - 0.9).abs() < 1e-15);
        assert!((s.at(2) - 0.81).abs() < 1e-15);

        let s = make_linear_schedule(50, 1e-4, 0.02).unwrap();
        // recompute the product independently
        let mut expected = 1.0;
        for i in 0..50 {
            expected *= 1.0 - (1e-4 + (0.02 - 1e-4) * i as f64 / 49.0);
        }
        assert!((s.at(50) - expected).abs() < 1e-14);
        assert!(s.alpha_bar().windows(2).all(|w| w[1] < w[0]));
        assert!(s.alpha_bar().iter().all(|a| *a > 0.0 && *a <= 1.0));
    }

    #[test]
    fn schedule_rejects_bad_inputs() {
        assert!(make_linear_schedule(0, 0.01, 0.02).is_err());
        assert!(make_linear_schedule(10, 0.0, 0.02).is_err());
        assert!(make_linear_schedule(10, 0.03, 0.02).is_err());
        assert!(make_linear_schedule(10, 0.01, 1.0).is_err());
        assert!(NoiseSchedule::from_alpha_bar(vec![1.0, 0.5, 0.6]).is_err());
        assert!(NoiseSchedule::from_alpha_bar(vec![0.9, 0.5]).is_err());
    }

    #[test]
    fn schedule_serializes_by_parameters() {
        let s = make_linear_schedule(20, 1e-4, 0.02).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"steps\":20"));
        let back: NoiseSchedule = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        let explicit: NoiseSchedule = serde_json::from_str(r#"{"alpha_bar":[1.0,0.5,0.25]}"#).unwrap();
        assert_eq!(explicit.steps(), 2);
    }

    #[test]
    fn mixture_validation() {
        assert!(GaussianMixture::new(vec![0.5, 0.4], vec![vec![0.0], vec![1.0]], vec![vec![1.0], vec![1.0]]).is_err());
        assert!(GaussianMixture::new(vec![1.0], vec![vec![0.0]], vec![vec![0.0]]).is_err());
        assert!(GaussianMixture::new(vec![0.5, 0.5], vec![vec![0.0], vec![1.0, 2.0]], vec![vec![1.0], vec![1.0, 1.0]]).is_err());
    }

    #[test]
    fn posterior_mean_examples() {
        let g = GaussianMixture::single(vec![0.7, -1.0], 0.5).unwrap();
        assert_eq!(g.posterior_mean(&[0.3, 2.0], 1.0).unwrap(), vec![0.3, 2.0]);

        let g = GaussianMixture::single(vec![0.0], 1.0).unwrap();
        let x = g.posterior_mean(&[2.0], 0.25).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15);

        let m = GaussianMixture::new(
            vec![0.2, 0.3, 0.5],
            vec![vec![-2.0, 1.0], vec![0.5, 3.0], vec![4.0, -1.0]],
            vec![vec![0.5, 1.0], vec![2.0, 0.3], vec![1.0, 1.0]],
        )
        .unwrap();
        // pure noise: the prediction collapses to the data mean, up to O(sqrt(ab) |z| |m|)
        let x = m.posterior_mean(&[0.2, -0.1], 1e-16).unwrap();
        for (a, b) in x.iter().zip(m.mean()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        assert!(m.posterior_mean(&[1.0], 0.5).is_err());
        assert!(m.posterior_mean(&[1.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn responsibilities_examples() {
        let m = two_modes(0.5, 3.0, -3.0);
        for ab in [0.01, 0.3, 1.0] {
            let r = m.responsibilities(&[0.0], ab).unwrap();
            assert!((r[0] - 0.5).abs() < 1e-15 && (r[1] - 0.5).abs() < 1e-15);
        }
        let m = two_modes(0.05, 3.0, -3.0);
        let r = m.responsibilities(&[3.0], 1.0).unwrap();
        assert!(r[0] >= 1.0 - 1e-6);
        let single = GaussianMixture::single(vec![1.0], 2.0).unwrap();
        assert_eq!(single.responsibilities(&[40.0], 0.5).unwrap(), vec![1.0]);
    }

    #[test]
    fn responsibilities_survive_extreme_inputs() {
        let m = two_modes(0.5, 3.0, -3.0);
        let r = m.responsibilities(&[1e3], 1.0).unwrap();
        assert!(r.iter().all(|v| v.is_finite()));
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(r[0], 1.0);
    }

    #[test]
    fn ddim_update_examples() {
        let z = ddim_update(&[2.0], &[1.0], 0.25, 0.5);
        assert!((z[0] - 1.931852).abs() < 1e-6);
        // equal noise levels with x0 forced to z_t is a fixed point
        let z = ddim_update(&[0.8, -1.1], &[0.8, -1.1], 0.4, 0.4);
        assert!((z[0] - 0.8).abs() < 1e-15 && (z[1] + 1.1).abs() < 1e-15);
    }

    #[test]
    fn ddim_step_with_point_mass_lands_on_mean() {
        let m = GaussianMixture::single(vec![1.5, -0.5], 1e-9).unwrap();
        let s = make_linear_schedule(50, 1e-4, 0.02).unwrap();
        let z = ddim_step(&m, &s, &[0.3, 2.0], 1, 0).unwrap();
        assert!((z[0] - 1.5).abs() < 1e-6 && (z[1] + 0.5).abs() < 1e-6);
        assert!(ddim_step(&m, &s, &[0.3, 2.0], 1, 1).is_err());
        assert!(ddim_step(&m, &s, &[0.3, 2.0], 51, 0).is_err());
    }

    #[test]
    fn generate_identity_and_linear() {
        let id = GeneratorSpec::identity();
        assert_eq!(id.generate(&[1.0, -2.0]).unwrap(), vec![1.0, -2.0]);
        let lin = GeneratorSpec::linear(vec![vec![2.0, 0.0], vec![0.0, 2.0]], vec![0.0, 0.0]).unwrap();
        assert_eq!(lin.generate(&[1.0, 1.0]).unwrap(), vec![2.0, 2.0]);
        assert!(lin.generate(&[1.0]).is_err());
        assert!(GeneratorSpec::linear(vec![vec![1.0, 0.0]], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn stride_must_divide_steps() {
        let m = GaussianMixture::single(vec![0.0], 1.0).unwrap();
        let s = make_linear_schedule(50, 1e-4, 0.02).unwrap();
        assert!(GeneratorSpec::exact_ddim(m.clone(), s.clone(), 7).is_err());
        assert!(GeneratorSpec::exact_ddim(m.clone(), s.clone(), 0).is_err());
        let g = GeneratorSpec::exact_ddim(m, s, 10).unwrap();
        assert_eq!(g.timesteps(), vec![50, 40, 30, 20, 10, 0]);
    }

    #[test]
    fn generate_is_referentially_transparent() {
        let m = two_modes(0.95, -3.0, 3.0);
        let g = GeneratorSpec::exact_ddim(m, make_linear_schedule(1000, 1e-4, 0.02).unwrap(), 20).unwrap();
        for a in Policy::standard(1).unwrap().sample(20, 3) {
            let x = g.generate(&a.z).unwrap();
            let y = g.generate(&a.z).unwrap();
            assert_eq!(x[0].to_bits(), y[0].to_bits());
        }
    }

    #[test]
    fn posterior_mean_composes_from_components() {
        let m = GaussianMixture::new(
            vec![0.1, 0.6, 0.3],
            vec![vec![-1.0, 2.0], vec![0.0, 0.5], vec![3.0, -3.0]],
            vec![vec![0.4, 1.0], vec![1.5, 0.7], vec![0.9, 0.2]],
        )
        .unwrap();
        for (z, ab) in [([0.2, -0.3], 0.7), ([2.5, -2.0], 0.1), ([-1.0, 1.9], 0.999)] {
            let resp = m.responsibilities(&z, ab).unwrap();
            let mut composed = [0.0; 2];
            for (k, r) in resp.iter().enumerate() {
                let x = m.component(k).unwrap().posterior_mean(&z, ab).unwrap();
                composed[0] += r * x[0];
                composed[1] += r * x[1];
            }
            let direct = m.posterior_mean(&z, ab).unwrap();
            assert!((direct[0] - composed[0]).abs() < 1e-12);
            assert!((direct[1] - composed[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn finer_stride_converges() {
        // Coarse strides contract the noise residual by prod cos(dphi), an error
        // proportional to |z|, so the 0.05 bound is checked on a central probe set.
        let m = two_modes(0.6, -0.5, 0.8);
        let s = make_linear_schedule(1000, 1e-4, 0.02).unwrap();
        let fine = GeneratorSpec::exact_ddim(m.clone(), s.clone(), 1).unwrap();
        let deviation = |stride: usize, probes: &[f64]| {
            let coarse = GeneratorSpec::exact_ddim(m.clone(), s.clone(), stride).unwrap();
            probes
                .iter()
                .map(|z| (fine.generate(&[*z]).unwrap()[0] - coarse.generate(&[*z]).unwrap()[0]).abs())
                .fold(0.0, f64::max)
        };
        let central = [-1.0, -0.6, -0.3, 0.0, 0.4, 0.7, 1.0];
        let worst = deviation(20, &central);
        assert!(worst <= 0.05, "max deviation {worst}");
        let wide = [-2.5, -1.0, 0.0, 1.1, 2.7];
        let errs: Vec<f64> = [50, 20, 5, 2].iter().map(|k| deviation(*k, &wide)).collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    }

    #[test]
    fn single_gaussian_pushforward_preserves_standard_normal() {
        let g = GeneratorSpec::exact_ddim(
            GaussianMixture::single(vec![0.0, 0.0], 1.0).unwrap(),
            make_linear_schedule(1000, 1e-4, 0.02).unwrap(),
            1,
        )
        .unwrap();
        let outs: Vec<Vec<f64>> = Policy::standard(2)
            .unwrap()
            .sample(10_000, 8)
            .iter()
            .map(|a| g.generate(&a.z).unwrap())
            .collect();
        let n = outs.len() as f64;
        for j in 0..2 {
            let mean = outs.iter().map(|x| x[j]).sum::<f64>() / n;
            let std = (outs.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            assert!(mean.abs() <= 0.05, "mean {mean}");
            assert!((std - 1.0).abs() <= 0.1, "std {std}");
        }
    }

    proptest! {
        #[test]
        fn single_gaussian_map_is_affine(
            z1 in prop::collection::vec(-3.0f64..3.0, 3),
            z2 in prop::collection::vec(-3.0f64..3.0, 3),
            lam in -1.0f64..2.0,
        ) {
            let g = GeneratorSpec::exact_ddim(
                GaussianMixture::new(vec![1.0], vec![vec![0.5, -1.0, 2.0]], vec![vec![0.7, 1.3, 0.2]]).unwrap(),
                make_linear_schedule(100, 1e-4, 0.02).unwrap(),
                5,
            ).unwrap();
            let mix: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
            let y1 = g.generate(&z1).unwrap();
            let y2 = g.generate(&z2).unwrap();
            let ym = g.generate(&mix).unwrap();
            for j in 0..3 {
                prop_assert!((ym[j] - (lam * y1[j] + (1.0 - lam) * y2[j])).abs() <= 1e-9);
            }
        }

        #[test]
        fn responsibilities_are_a_distribution(
            z in -20.0f64..20.0,
            ab in 1e-6f64..=1.0,
            w in 0.0f64..=1.0,
        ) {
            let m = two_modes(w, -3.0, 3.0);
            let r = m.responsibilities(&[z], ab).unwrap();
            prop_assert!(r.iter().all(|v| *v >= 0.0));
            prop_assert!((r.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}
