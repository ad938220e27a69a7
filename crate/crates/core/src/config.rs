//! Experiment configuration files (TOML).
//!
//! ```toml
//! out_dir = "runs/quadratic"
//! log_every = 1
//!
//! [find]
//! batch_size = 8
//! total_steps = 500
//!
//! [generator]
//! kind = "identity"
//!
//! [reward]
//! kind = "neg_sq_dist"
//! target = [2.0, -1.0, 0.5, 1.5]
//!
//! [eval]
//! samples = 1000
//! ```
//!
//! Every key other than `generator` and `reward` is optional. `find.dim` is
//! inferred from the generator or reward when omitted.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::environment::{Generator, GeneratorSpec};
use crate::error::{Error, Result};
use crate::find::FindConfig;
use crate::reward::{Reward, RewardSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub samples: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            seed: 12_345,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Log a progress line every this many iterations.
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    #[serde(default)]
    pub find: FindConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    pub generator: GeneratorSpec,
    pub reward: RewardSpec,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

fn default_log_every() -> usize {
    1
}

impl ExperimentConfig {
    pub fn new(find: FindConfig, generator: GeneratorSpec, reward: RewardSpec) -> Result<Self> {
        let mut config = Self {
            out_dir: default_out_dir(),
            log_every: default_log_every(),
            find,
            eval: EvalConfig::default(),
            generator,
            reward,
        };
        config.resolve()?;
        Ok(config)
    }

    /// Parses and validates a TOML document, filling defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut config: Self = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
                .unwrap_or(0);
            Error::ConfigParse {
                line,
                message: e.message().trim().to_string(),
            }
        })?;
        config.resolve()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<serialize>", e.to_string()))
    }

    /// Infers the latent dimension and checks every nested invariant.
    pub fn resolve(&mut self) -> Result<()> {
        if self.out_dir.as_os_str().is_empty() {
            return Err(Error::config("out_dir", "must be non-empty"));
        }
        if self.log_every == 0 {
            return Err(Error::config("log_every", "must be >= 1"));
        }
        if self.eval.samples < 2 {
            return Err(Error::config("eval.samples", "must be >= 2"));
        }
        self.generator.validate()?;
        self.reward.validate()?;
        let gen_dim = self.generator.input_dim();
        let reward_dim = self.reward.input_dim();
        if self.find.dim == 0 {
            self.find.dim = gen_dim.or(reward_dim).ok_or_else(|| {
                Error::config(
                    "find.dim",
                    "cannot be inferred from the generator or reward; set it explicitly",
                )
            })?;
        }
        let dim = self.find.dim;
        if let Some(d) = gen_dim.filter(|d| *d != dim) {
            return Err(Error::config(
                "generator",
                format!("expects dimension {d} but find.dim is {dim}"),
            ));
        }
        if let Some(d) = reward_dim.filter(|d| *d != dim) {
            return Err(Error::config(
                "reward",
                format!("expects dimension {d} but the generator outputs {dim}"),
            ));
        }
        self.find.validate()
    }
}

/// Reads and validates the config at `path`.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::config("<file>", format!("cannot read {}: {e}", path.display()))
    })?;
    ExperimentConfig::from_toml_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::find::ClipMode;
    use crate::policy::RatioMode;

    const MINIMAL: &str = r#"
[generator]
kind = "identity"

[reward]
kind = "neg_sq_dist"
target = [1.0, 2.0]
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.find.lambda, 0.02);
        assert_eq!(c.find.total_steps, 150);
        assert_eq!(c.find.lr, 0.001);
        assert_eq!(c.find.batch_size, 1);
        assert_eq!(c.find.replay_window, 1);
        assert_eq!(c.find.inner_epochs, 1);
        assert_eq!(c.find.ratio_mode, RatioMode::PerDimGeoMean);
        assert_eq!(c.find.clip_mode, ClipMode::Drop);
        assert_eq!(c.find.dim, 2);
        assert_eq!(c.find.drcm.hidden, 64);
        assert!(c.find.drcm.enabled);
    }

    #[test]
    fn negative_lambda_is_rejected_by_name() {
        let text = format!("[find]\nlambda = -0.1\n{MINIMAL}");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
        assert!(err.is_config_error());
        assert!(err.to_string().contains("find.lambda"), "{err}");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "[find]\nbatch_size = 4\nlr = \"fast\"\n";
        match ExperimentConfig::from_toml_str(text).unwrap_err() {
            Error::ConfigParse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
        let err = ExperimentConfig::from_toml_str(&format!("[find]\nbogus = 1\n{MINIMAL}")).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn dimension_conflicts_are_rejected() {
        let text = format!("[find]\ndim = 3\n{MINIMAL}");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("reward"), "{err}");
        let err = ExperimentConfig::from_toml_str(
            "[generator]\nkind = \"identity\"\n[reward]\nkind = \"weighted_sum\"\nterms = []\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("reward.terms"), "{err}");
    }

    #[test]
    fn full_config_roundtrips() {
        let text = r#"
out_dir = "runs/mode"
log_every = 10

[find]
batch_size = 8
total_steps = 600
lr = 0.05
lambda = inf
replay_window = 2
inner_epochs = 3
clip_mode = "clamp"
ratio_mode = "full"
seed = 7

[find.early_stop]
window = 40

[find.drcm]
hidden = 32
input = "summary"

[generator]
kind = "exact_ddim"
condition = "rare mode"
stride = 20
schedule = { steps = 1000 }
mixture = { weights = [0.95, 0.05], means = [[-3.0], [3.0]], stds = [[1.0], [1.0]] }

[reward]
kind = "weighted_sum"
terms = [
  { weight = 1.0, reward = { kind = "mode_indicator", component = 1, mixture = { weights = [0.95, 0.05], means = [[-3.0], [3.0]], stds = [[1.0], [1.0]] } } },
  { weight = 0.1, reward = { kind = "neg_sq_dist", target = [3.0] } },
]
"#;
        let c = ExperimentConfig::from_toml_str(text).unwrap();
        assert!(c.find.lambda.is_infinite());
        assert_eq!(c.find.early_stop.unwrap().sigma, 5.0);
        assert_eq!(c.generator.condition, "rare mode");
        let again = ExperimentConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(again, c);

        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let again = ExperimentConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn load_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        std::fs::write(&path, MINIMAL).unwrap();
        assert_eq!(load_config(&path).unwrap().find.dim, 2);
        assert!(load_config(dir.path().join("missing.toml")).unwrap_err().is_config_error());
    }
}
