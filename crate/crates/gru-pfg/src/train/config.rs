//! Training hyperparameters.

use crate::error::{Error, Result};
use crate::model::DEFAULT_HIDDEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" | "adam-style" => Ok(OptimizerKind::Adam),
            "sgd" | "plain-sgd" => Ok(OptimizerKind::Sgd),
            other => Err(Error::Spec(format!(
                "unknown optimizer {other:?}; expected adam or sgd"
            ))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Learning rate; 0 freezes parameters, which tests use to pin the
    /// early-stopping and loss-accounting contracts.
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub early_stop_patience: usize,
    pub seed: u64,
    pub hidden_size: usize,
    pub grad_clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            learning_rate: 2e-4,
            optimizer: OptimizerKind::Adam,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            early_stop_patience: 10,
            seed: 0,
            hidden_size: DEFAULT_HIDDEN,
            grad_clip_norm: Some(3.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Spec("epochs must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Spec(format!(
                "learning_rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::Spec("early_stop_patience must be at least 1".into()));
        }
        if self.hidden_size < 2 {
            return Err(Error::Spec(format!(
                "hidden_size must be at least 2, got {}",
                self.hidden_size
            )));
        }
        if let Some(clip) = self.grad_clip_norm {
            if !(clip > 0.0) {
                return Err(Error::Spec(format!(
                    "grad_clip_norm must be positive, got {clip}"
                )));
            }
        }
        for (name, v) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Spec(format!("{name} must be in [0, 1), got {v}")));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::Spec(format!(
                "adam_eps must be positive, got {}",
                self.adam_eps
            )));
        }
        Ok(())
    }
}
