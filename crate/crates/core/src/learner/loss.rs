use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Predictions are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before the log.
pub const BCE_CLAMP: f64 = 1e-7;

/// Allowed deviation of `sum(alphas)` from 1.
pub const ALPHA_SUM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseLoss {
    BinaryCrossEntropy,
    SquaredError,
}

impl BaseLoss {
    /// Loss of `prediction` against one target. Cross-entropy expects
    /// `prediction` inside (0, 1).
    pub fn value(self, prediction: f64, target: f64) -> f64 {
        match self {
            BaseLoss::SquaredError => (prediction - target) * (prediction - target),
            BaseLoss::BinaryCrossEntropy => {
                let t = prediction.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                -(target * t.ln() + (1.0 - target) * (1.0 - t).ln())
            }
        }
    }

    /// Derivative of the loss with respect to the sigmoid's input, given the
    /// sigmoid output `prediction`.
    pub(crate) fn logit_derivative(self, prediction: f64, target: f64) -> f64 {
        match self {
            BaseLoss::SquaredError => 2.0 * (prediction - target) * prediction * (1.0 - prediction),
            BaseLoss::BinaryCrossEntropy => prediction - target,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    base_loss: BaseLoss,
    alphas: Vec<f64>,
}

impl LossConfig {
    pub fn new(base_loss: BaseLoss, alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::Config("at least one target weight is required".into()));
        }
        if alphas.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::Config(format!("target weights must be finite and non-negative: {alphas:?}")));
        }
        let sum: f64 = alphas.iter().sum();
        if (sum - 1.0).abs() > ALPHA_SUM_TOL {
            return Err(Error::Config(format!("target weights must sum to 1, got {sum}")));
        }
        Ok(Self { base_loss, alphas })
    }

    /// Equal weights `1/p`.
    pub fn uniform(base_loss: BaseLoss, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::Config("at least one target weight is required".into()));
        }
        Self::new(base_loss, vec![1.0 / p as f64; p])
    }

    pub fn base_loss(&self) -> BaseLoss {
        self.base_loss
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn p(&self) -> usize {
        self.alphas.len()
    }

    pub(crate) fn check_targets(&self, targets: &[f64]) -> Result<()> {
        if targets.len() != self.p() {
            return Err(Error::InvalidInput(format!(
                "expected {} targets, got {}",
                self.p(),
                targets.len()
            )));
        }
        Ok(())
    }
}

/// Weighted sum of base losses against each of the `p` targets.
pub fn joint_loss(prediction: f64, targets: &[f64], config: &LossConfig) -> Result<f64> {
    config.check_targets(targets)?;
    if config.base_loss == BaseLoss::BinaryCrossEntropy && !(prediction > 0.0 && prediction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "cross-entropy needs a prediction inside (0, 1), got {prediction}"
        )));
    }
    Ok(config
        .alphas
        .iter()
        .zip(targets)
        .map(|(a, &t)| a * config.base_loss.value(prediction, t))
        .sum())
}
