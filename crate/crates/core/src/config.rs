//! Experiment configuration, read from a TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knowledge::GroundingParams;
use crate::learner::{Architecture, BaseLoss, LossConfig, OptimConfig, Optimizer};
use crate::reasoning::ReasoningParams;
use crate::sample::DiversityParams;
use crate::synth::{NoiseProfile, TaskSpec};
use crate::targets::TargetParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    pub base_loss: BaseLoss,
    /// Per-target weights; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
}

impl Default for LossSection {
    fn default() -> Self {
        Self {
            base_loss: BaseLoss::BinaryCrossEntropy,
            alphas: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimSection {
    pub architecture: Architecture,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
}

impl Default for OptimSection {
    fn default() -> Self {
        Self {
            architecture: Architecture::OneHidden { width: 8 },
            learning_rate: 0.05,
            epochs: 60,
            batch_size: 64,
            optimizer: Optimizer::Momentum { beta: 0.9 },
        }
    }
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_jobs() -> usize {
    1
}

fn default_threshold() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Seeds evaluated concurrently.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    /// Probability at or above which a prediction counts as positive.
    #[serde(default = "default_threshold")]
    pub decision_threshold: f64,
    pub task: TaskSpec,
    #[serde(default)]
    pub diversity: DiversityParams,
    #[serde(default)]
    pub grounding: GroundingParams,
    #[serde(default)]
    pub reasoning: ReasoningParams,
    #[serde(default)]
    pub targets: TargetParams,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default)]
    pub optim: OptimSection,
}

impl Default for ExperimentConfig {
    /// Three labelers over 2000 instances each: one only adds false
    /// positives, one only drops true positives, one does both.
    fn default() -> Self {
        let profile = |a, b| NoiseProfile {
            flip_0_to_1: a,
            flip_1_to_0: b,
        };
        Self {
            seeds: default_seeds(),
            out_dir: default_out_dir(),
            jobs: default_jobs(),
            decision_threshold: default_threshold(),
            task: TaskSpec {
                n_per_sample: vec![2000, 2000, 2000],
                feature_dim: 2,
                signal_separation: 2.0,
                truth_positive_rate: 0.3,
                noise_profiles: vec![profile(0.30, 0.00), profile(0.00, 0.30), profile(0.15, 0.15)],
                test_fraction: 0.2,
            },
            diversity: DiversityParams::default(),
            grounding: GroundingParams::default(),
            reasoning: ReasoningParams::default(),
            targets: TargetParams::default(),
            loss: LossSection::default(),
            optim: OptimSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |span| text[..span.start.min(text.len())].matches('\n').count() + 1);
            Error::Parse {
                origin: "<config>".into(),
                line,
                message: e.message().to_string(),
            }
        })?;
        Ok(config)
    }

    /// Reads a config file. Syntax errors surface as configuration errors
    /// that still name the file and line.
    pub fn load(path: &Path) -> Result<Self> {
        crate::io::read_with(path, Self::from_toml_str).map_err(|e| match e {
            Error::Parse { origin, line, message } => Error::Config(format!("{origin}:{line}: {message}")),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds given".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.decision_threshold) {
            return Err(Error::Config("decision_threshold must lie in [0, 1]".into()));
        }
        self.task.validate()?;
        self.diversity.validate()?;
        self.grounding.validate()?;
        self.reasoning.validate()?;
        if self.targets.targets_per_sample == 0 {
            return Err(Error::Config("targets_per_sample must be at least 1".into()));
        }
        self.optim.architecture.validate()?;
        self.optim_config(0).validate()?;
        self.loss_config(self.targets.targets_per_sample)?;
        if self
            .grounding
            .predicates
            .iter()
            .any(|p| p.needs_features())
            && self.task.feature_dim == 0
        {
            return Err(Error::Config("feature predicates enabled on featureless data".into()));
        }
        Ok(())
    }

    /// Loss over `p` targets: configured weights, or uniform.
    pub fn loss_config(&self, p: usize) -> Result<LossConfig> {
        match &self.loss.alphas {
            Some(alphas) if alphas.len() != p => Err(Error::Config(format!(
                "{} target weights configured for {p} targets per instance",
                alphas.len()
            ))),
            Some(alphas) => LossConfig::new(self.loss.base_loss, alphas.clone()),
            None => LossConfig::uniform(self.loss.base_loss, p),
        }
    }

    /// Loss for one raw label per instance.
    pub fn loss_config_single(&self) -> Result<LossConfig> {
        LossConfig::uniform(self.loss.base_loss, 1)
    }

    pub fn optim_config(&self, seed: u64) -> OptimConfig {
        OptimConfig {
            learning_rate: self.optim.learning_rate,
            epochs: self.optim.epochs,
            batch_size: self.optim.batch_size,
            seed,
            optimizer: self.optim.optimizer,
        }
    }

    /// The settings that shape results, without seeds or output location.
    pub fn echo(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serialises to JSON");
        if let Some(map) = v.as_object_mut() {
            for key in ["seeds", "out_dir", "jobs"] {
                map.remove(key);
            }
        }
        v
    }
}
