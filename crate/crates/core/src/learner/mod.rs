//! Differentiable learning model, weighted multi-target loss and its
//! minimisation by mini-batch gradient descent.

mod loss;
mod model;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use loss::{joint_loss, BaseLoss, LossConfig, ALPHA_SUM_TOL, BCE_CLAMP};
pub use model::{sigmoid, Architecture, ModelParams, INIT_SCALE};

/// One training row: features and its `p` targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub features: Vec<f64>,
    pub targets: Vec<f64>,
}

fn check_example(params: &ModelParams, ex: &Example, config: &LossConfig) -> Result<()> {
    if ex.features.len() != params.input_dim() {
        return Err(Error::InvalidInput(format!(
            "model expects {} features, example has {}",
            params.input_dim(),
            ex.features.len()
        )));
    }
    config.check_targets(&ex.targets)
}

/// Mean joint loss over `batch`.
pub fn mean_joint_loss(params: &ModelParams, batch: &[Example], config: &LossConfig) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let mut total = 0.0;
    for ex in batch {
        check_example(params, ex, config)?;
        total += joint_loss(params.predict_features(&ex.features)?, &ex.targets, config)?;
    }
    Ok(total / batch.len() as f64)
}

fn accumulate(params: &ModelParams, batch: &[Example], config: &LossConfig, grad: &mut ModelParams) {
    let mut hidden = Vec::new();
    let scale = 1.0 / batch.len() as f64;
    for ex in batch {
        let t = sigmoid(params.logit(&ex.features, &mut hidden));
        let dz: f64 = config
            .alphas()
            .iter()
            .zip(&ex.targets)
            .map(|(a, &target)| a * config.base_loss().logit_derivative(t, target))
            .sum();
        params.accumulate_logit_gradient(&ex.features, &hidden, scale * dz, grad);
    }
}

/// Analytic gradient of the mean joint loss over `batch`, shaped like
/// `params`.
pub fn joint_loss_gradient(params: &ModelParams, batch: &[Example], config: &LossConfig) -> Result<ModelParams> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    for ex in batch {
        check_example(params, ex, config)?;
    }
    let mut grad = ModelParams::zeros(params.architecture(), params.input_dim());
    accumulate(params, batch, config, &mut grad);
    Ok(grad)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Optimizer {
    GradientDescent,
    /// Heavy-ball momentum: `v = beta * v + g; params -= lr * v`.
    Momentum { beta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if let Optimizer::Momentum { beta } = self.optimizer {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::Config(format!("momentum beta must lie in [0, 1), got {beta}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean joint loss over the full data after each epoch.
    pub loss_per_epoch: Vec<f64>,
    pub final_params: ModelParams,
    /// Seconds.
    pub wall_time: f64,
    /// Parameter updates performed.
    pub steps: usize,
}

/// Mini-batch descent on the mean joint loss. Each epoch visits the data in
/// a seeded shuffle order, so a fixed seed reproduces the run exactly.
pub fn train(initial: &ModelParams, data: &[Example], loss: &LossConfig, optim: &OptimConfig) -> Result<TrainReport> {
    optim.validate()?;
    initial.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("no training examples".into()));
    }
    for ex in data {
        check_example(initial, ex, loss)?;
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(optim.seed);
    let mut params = initial.clone();
    let mut velocity = ModelParams::zeros(params.architecture(), params.input_dim());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut batch = Vec::with_capacity(optim.batch_size);
    let mut loss_per_epoch = Vec::with_capacity(optim.epochs);
    let mut steps = 0;

    for epoch in 1..=optim.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(optim.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i].clone()));
            let mut grad = ModelParams::zeros(params.architecture(), params.input_dim());
            accumulate(&params, &batch, loss, &mut grad);
            let lr = optim.learning_rate;
            match optim.optimizer {
                Optimizer::GradientDescent => params.combine(&grad, |p, g| p - lr * g),
                Optimizer::Momentum { beta } => {
                    velocity.combine(&grad, |v, g| beta * v + g);
                    params.combine(&velocity, |p, v| p - lr * v);
                }
            }
            steps += 1;
        }
        let epoch_loss = match mean_joint_loss(&params, data, loss) {
            Ok(l) if l.is_finite() => l,
            Ok(l) => return Err(Error::Divergence { epoch, loss: l }),
            Err(_) => return Err(Error::Divergence { epoch, loss: f64::NAN }),
        };
        loss_per_epoch.push(epoch_loss);
    }
    Ok(TrainReport {
        loss_per_epoch,
        final_params: params,
        wall_time: started.elapsed().as_secs_f64(),
        steps,
    })
}
