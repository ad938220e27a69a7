//! Dynamic reward calibration: a small MLP `g(theta)` that tracks the expected
//! reward of the current policy and serves as a learned baseline.
//!
//! Parameters live in one flat vector with layout
//! `[w1 (h x in), b1 (h), w2 (h x h), b2 (h), w3 (h), b3 (1)]`, row-major.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::optim::{AdamWParams, OptimState};
use crate::policy::Policy;
use crate::rng::noise_stream;

const INIT_STREAM: u64 = 0xD2C3;

/// How a policy is presented to the baseline network.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputEncoding {
    /// `concat(mu, log_sigma)`, width `2 d`.
    #[default]
    Concat,
    /// mean, std, min and max of `mu` then of `log_sigma`, width 8.
    Summary,
}

impl InputEncoding {
    pub fn width(self, dim: usize) -> usize {
        match self {
            Self::Concat => 2 * dim,
            Self::Summary => 8,
        }
    }

    pub fn encode(self, policy: &Policy) -> Vec<f64> {
        match self {
            Self::Concat => policy.to_flat(),
            Self::Summary => {
                let mut out = Vec::with_capacity(8);
                for v in [policy.mu(), policy.log_sigma()] {
                    let n = v.len() as f64;
                    let mean = v.iter().sum::<f64>() / n;
                    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                    out.push(mean);
                    out.push(var.sqrt());
                    out.push(v.iter().copied().fold(f64::INFINITY, f64::min));
                    out.push(v.iter().copied().fold(f64::NEG_INFINITY, f64::max));
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DrcmConfig {
    /// When false the baseline is identically zero.
    pub enabled: bool,
    pub hidden: usize,
    pub lr: f64,
    pub input: InputEncoding,
    pub optimizer: AdamWParams,
}

impl Default for DrcmConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            hidden: 64,
            lr: 1e-3,
            input: InputEncoding::Concat,
            optimizer: AdamWParams {
                weight_decay: 0.0,
                ..AdamWParams::default()
            },
        }
    }
}

impl DrcmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::config("drcm.hidden", "must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("drcm.lr", "must be positive"));
        }
        self.optimizer.validate("drcm.optimizer")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetDocument", into = "NetDocument")]
pub struct BaselineNet {
    input_width: usize,
    hidden: usize,
    encoding: InputEncoding,
    params: Vec<f64>,
    optim: OptimState,
}

struct Forward {
    x: Vec<f64>,
    a1: Vec<f64>,
    h1: Vec<f64>,
    a2: Vec<f64>,
    h2: Vec<f64>,
    y: f64,
}

impl BaselineNet {
    /// Glorot-uniform weights, zero biases, seeded.
    pub fn new(policy_dim: usize, config: &DrcmConfig, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(policy_dim, config)?;
        let mut rng = noise_stream(seed, INIT_STREAM);
        let (i, h) = (net.input_width, net.hidden);
        let layers = [(0, h * i, i, h), (h * i + h, h * h, h, h), (h * i + h + h * h + h, h, h, 1)];
        for (start, len, fan_in, fan_out) in layers {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut net.params[start..start + len] {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    /// All weights and biases zero.
    pub fn zeros(policy_dim: usize, config: &DrcmConfig) -> Result<Self> {
        config.validate()?;
        if policy_dim == 0 {
            return Err(Error::InvalidArgument("policy dim must be positive".into()));
        }
        let input_width = config.input.width(policy_dim);
        let len = param_count(input_width, config.hidden);
        Ok(Self {
            input_width,
            hidden: config.hidden,
            encoding: config.input,
            params: vec![0.0; len],
            optim: OptimState::new(len, config.optimizer),
        })
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        check_dim("baseline params", self.params.len(), params.len())?;
        self.params = params;
        Ok(())
    }

    pub fn set_output_bias(&mut self, value: f64) {
        let last = self.params.len() - 1;
        self.params[last] = value;
    }

    pub fn optim_state(&self) -> &OptimState {
        &self.optim
    }

    fn encode(&self, policy: &Policy) -> Result<Vec<f64>> {
        check_dim(
            "baseline input",
            self.input_width,
            self.encoding.width(policy.dim()),
        )?;
        Ok(self.encoding.encode(policy))
    }

    fn forward(&self, x: Vec<f64>) -> Forward {
        let (i, h) = (self.input_width, self.hidden);
        let (w1, rest) = self.params.split_at(h * i);
        let (b1, rest) = rest.split_at(h);
        let (w2, rest) = rest.split_at(h * h);
        let (b2, rest) = rest.split_at(h);
        let (w3, b3) = rest.split_at(h);

        let a1: Vec<f64> = (0..h)
            .map(|r| b1[r] + dot(&w1[r * i..(r + 1) * i], &x))
            .collect();
        let h1: Vec<f64> = a1.iter().map(|a| a.max(0.0)).collect();
        let a2: Vec<f64> = (0..h)
            .map(|r| b2[r] + dot(&w2[r * h..(r + 1) * h], &h1))
            .collect();
        let h2: Vec<f64> = a2.iter().map(|a| a.max(0.0)).collect();
        let y = b3[0] + dot(w3, &h2);
        Forward { x, a1, h1, a2, h2, y }
    }

    /// Predicted expected reward `r_bar = g(theta)`.
    pub fn predict(&self, policy: &Policy) -> Result<f64> {
        let x = self.encode(policy)?;
        Ok(self.forward(x).y)
    }

    /// Loss `(1/m) sum_k (r_bar - r_k)^2` and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, policy: &Policy, rewards: &[f64]) -> Result<(f64, Vec<f64>)> {
        if rewards.is_empty() {
            return Err(Error::InvalidArgument("baseline update needs at least one reward".into()));
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidArgument("non-finite reward".into()));
        }
        let f = self.forward(self.encode(policy)?);
        let m = rewards.len() as f64;
        let loss = rewards.iter().map(|r| (f.y - r).powi(2)).sum::<f64>() / m;
        let dy = 2.0 * rewards.iter().map(|r| f.y - r).sum::<f64>() / m;

        let (i, h) = (self.input_width, self.hidden);
        let off_b1 = h * i;
        let off_w2 = off_b1 + h;
        let off_b2 = off_w2 + h * h;
        let off_w3 = off_b2 + h;
        let off_b3 = off_w3 + h;
        let w2 = &self.params[off_w2..off_b2];
        let w3 = &self.params[off_w3..off_b3];

        let mut grad = vec![0.0; self.params.len()];
        grad[off_b3] = dy;
        let mut da2 = vec![0.0; h];
        for r in 0..h {
            grad[off_w3 + r] = dy * f.h2[r];
            da2[r] = if f.a2[r] > 0.0 { dy * w3[r] } else { 0.0 };
        }
        let mut dh1 = vec![0.0; h];
        for r in 0..h {
            grad[off_b2 + r] = da2[r];
            for c in 0..h {
                grad[off_w2 + r * h + c] = da2[r] * f.h1[c];
                dh1[c] += w2[r * h + c] * da2[r];
            }
        }
        for r in 0..h {
            let da1 = if f.a1[r] > 0.0 { dh1[r] } else { 0.0 };
            grad[off_b1 + r] = da1;
            for c in 0..i {
                grad[r * i + c] = da1 * f.x[c];
            }
        }
        Ok((loss, grad))
    }

    /// One optimizer step on the calibration loss. Returns the pre-step loss.
    pub fn update(&mut self, policy: &Policy, rewards: &[f64], lr: f64) -> Result<f64> {
        let (loss, grad) = self.loss_and_grad(policy, rewards)?;
        self.optim.step(&mut self.params, &grad, lr)?;
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("baseline network parameters".into()));
        }
        Ok(loss)
    }
}

fn param_count(input_width: usize, hidden: usize) -> usize {
    hidden * input_width + hidden + hidden * hidden + hidden + hidden + 1
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Serialize, Deserialize)]
struct NetDocument {
    encoding: InputEncoding,
    /// `[out, in]` per fully connected layer.
    layer_shapes: Vec<[usize; 2]>,
    params: Vec<f64>,
    optim: OptimState,
}

impl From<BaselineNet> for NetDocument {
    fn from(net: BaselineNet) -> Self {
        let (i, h) = (net.input_width, net.hidden);
        Self {
            encoding: net.encoding,
            layer_shapes: vec![[h, i], [h, h], [1, h]],
            params: net.params,
            optim: net.optim,
        }
    }
}

impl TryFrom<NetDocument> for BaselineNet {
    type Error = Error;

    fn try_from(doc: NetDocument) -> Result<Self> {
        let shapes = &doc.layer_shapes;
        let consistent = shapes.len() == 3
            && shapes[1] == [shapes[0][0], shapes[0][0]]
            && shapes[2] == [1, shapes[0][0]];
        if !consistent || shapes[0][0] == 0 || shapes[0][1] == 0 {
            return Err(Error::InvalidArgument(format!(
                "inconsistent baseline layer shapes {shapes:?}"
            )));
        }
        let (hidden, input_width) = (shapes[0][0], shapes[0][1]);
        let len = param_count(input_width, hidden);
        check_dim("baseline params", len, doc.params.len())?;
        check_dim("baseline optimizer state", len, doc.optim.len())?;
        if doc.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("non-finite baseline parameters".into()));
        }
        Ok(Self {
            input_width,
            hidden,
            encoding: doc.encoding,
            params: doc.params,
            optim: doc.optim,
        })
    }
}
