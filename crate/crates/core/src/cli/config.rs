//! Experiment configuration (TOML, unknown keys rejected) and its provenance hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cli::split::SplitPolicy;
use crate::cli::toy::ToySpec;
use crate::error::{Error, Result};
use crate::inference::lbfgs::LbfgsConfig;
use crate::inference::{InitOverrides, OptimizeConfig};
use crate::model::Variant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub order: u32,
    pub variant: Variant,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            order: 1,
            variant: Variant::Homogeneous,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub restarts: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub rel_f_tol: f64,
    pub memory: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let l = LbfgsConfig::default();
        Self {
            restarts: 5,
            max_iters: l.max_iters,
            grad_tol: l.grad_tol,
            rel_f_tol: l.rel_f_tol,
            memory: l.memory,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoSection {
    /// Training data, or the full dataset for `eval` resplits.
    pub data: Option<PathBuf>,
    /// Held-out data for `eval` with a trained model.
    pub test: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Orders to compare; empty means the model section's order only.
    pub orders: Vec<u32>,
    pub resplits: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            orders: Vec::new(),
            resplits: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub model: ModelSection,
    pub init: InitOverrides,
    pub optimizer: OptimizerSection,
    pub split: SplitPolicy,
    pub eval: EvalSection,
    pub toy: ToySpec,
    pub io: IoSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::InvalidSpec(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> std::result::Result<Self, crate::cli::CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| crate::cli::CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(Self::from_toml(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.order == 0 {
            return Err(Error::InvalidSpec("model.order must be at least 1".into()));
        }
        if self.eval.orders.contains(&0) {
            return Err(Error::InvalidSpec("eval.orders must be at least 1".into()));
        }
        if self.optimizer.restarts == 0 {
            return Err(Error::InvalidSpec("optimizer.restarts must be at least 1".into()));
        }
        if self.optimizer.memory == 0 || self.optimizer.max_iters == 0 {
            return Err(Error::InvalidSpec(
                "optimizer.memory and optimizer.max_iters must be positive".into(),
            ));
        }
        if !(self.optimizer.grad_tol >= 0.0 && self.optimizer.rel_f_tol >= 0.0) {
            return Err(Error::InvalidSpec("optimizer tolerances must be non-negative".into()));
        }
        if self.eval.resplits == 0 {
            return Err(Error::InvalidSpec("eval.resplits must be at least 1".into()));
        }
        let positive = |v: Option<f64>| v.is_none_or(|v| v.is_finite() && v > 0.0);
        if !positive(self.init.length_scale) || !positive(self.init.latent_length_scale) {
            return Err(Error::InvalidSpec("init length-scales must be positive".into()));
        }
        if self.init.noise_fraction.is_some_and(|f| !(0.0..1.0).contains(&f)) {
            return Err(Error::InvalidSpec("init.noise_fraction must lie in [0, 1)".into()));
        }
        self.split.validate()?;
        self.toy.validate()
    }

    pub fn optimize_config(&self, seed: u64) -> OptimizeConfig {
        OptimizeConfig {
            restarts: self.optimizer.restarts,
            seed,
            lbfgs: LbfgsConfig {
                memory: self.optimizer.memory,
                max_iters: self.optimizer.max_iters,
                grad_tol: self.optimizer.grad_tol,
                rel_f_tol: self.optimizer.rel_f_tol,
                ..LbfgsConfig::default()
            },
            init: self.init,
            jitter: Default::default(),
        }
    }

    pub fn orders(&self) -> Vec<u32> {
        if self.eval.orders.is_empty() {
            vec![self.model.order]
        } else {
            self.eval.orders.clone()
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// SHA-256 of the canonical TOML rendering, in hex. IO paths are excluded so
    /// that the same experiment hashes identically wherever its files live.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.io = IoSection::default();
        hex::encode(Sha256::digest(canonical.to_toml().as_bytes()))
    }
}
