//! JSON checkpoints of the optimizer state.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::drcm::BaselineNet;
use crate::error::{check_dim, Error, Result};
use crate::find::FindState;
use crate::optim::OptimState;
use crate::policy::Policy;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    /// Number of completed iterations.
    pub iteration: usize,
    /// Sampling streams are keyed by `(seed, iteration)`, so this pair fixes the RNG state.
    pub seed: u64,
    pub policy: Policy,
    pub policy_optim: OptimState,
    pub baseline: BaselineNet,
}

impl Checkpoint {
    pub fn from_state(state: &FindState, seed: u64) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            iteration: state.iteration,
            seed,
            policy: state.policy.clone(),
            policy_optim: state.policy_optim.clone(),
            baseline: state.net.clone(),
        }
    }

    /// Optimizer state to resume from. Replay history is not checkpointed.
    pub fn into_state(self) -> FindState {
        FindState {
            policy: self.policy,
            net: self.baseline,
            policy_optim: self.policy_optim,
            replay: VecDeque::new(),
            iteration: self.iteration,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Self = serde_json::from_str(text)?;
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported checkpoint format_version {}",
                ckpt.format_version
            )));
        }
        check_dim(
            "checkpoint optimizer state",
            2 * ckpt.policy.dim(),
            ckpt.policy_optim.len(),
        )?;
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
