use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::Instance;

/// Half-width of the uniform weight initialisation.
pub const INIT_SCALE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Architecture {
    Linear,
    OneHidden { width: usize },
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        match self {
            Architecture::OneHidden { width: 0 } => Err(Error::Config("hidden layer width must be positive".into())),
            _ => Ok(()),
        }
    }
}

/// Parameters of the learning model. The flat order used by checkpoints is
/// the field order below, matrices row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    Linear {
        weights: Vec<f64>,
        bias: f64,
    },
    OneHidden {
        /// `width` rows of `input_dim` weights.
        hidden_weights: Vec<Vec<f64>>,
        hidden_bias: Vec<f64>,
        output_weights: Vec<f64>,
        output_bias: f64,
    },
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Keeps model outputs strictly inside (0, 1).
fn open_unit(t: f64) -> f64 {
    t.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

impl ModelParams {
    pub fn zeros(arch: Architecture, input_dim: usize) -> Self {
        match arch {
            Architecture::Linear => ModelParams::Linear {
                weights: vec![0.0; input_dim],
                bias: 0.0,
            },
            Architecture::OneHidden { width } => ModelParams::OneHidden {
                hidden_weights: vec![vec![0.0; input_dim]; width],
                hidden_bias: vec![0.0; width],
                output_weights: vec![0.0; width],
                output_bias: 0.0,
            },
        }
    }

    /// Weights uniform in `(-INIT_SCALE, INIT_SCALE)`, biases zero.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, input_dim: usize, rng: &mut R) -> Self {
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-INIT_SCALE..INIT_SCALE)).collect() };
        match arch {
            Architecture::Linear => ModelParams::Linear {
                weights: draw(input_dim),
                bias: 0.0,
            },
            Architecture::OneHidden { width } => {
                let hidden_weights = (0..width).map(|_| draw(input_dim)).collect();
                ModelParams::OneHidden {
                    hidden_weights,
                    hidden_bias: vec![0.0; width],
                    output_weights: draw(width),
                    output_bias: 0.0,
                }
            }
        }
    }

    pub fn architecture(&self) -> Architecture {
        match self {
            ModelParams::Linear { .. } => Architecture::Linear,
            ModelParams::OneHidden { hidden_bias, .. } => Architecture::OneHidden {
                width: hidden_bias.len(),
            },
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            ModelParams::Linear { weights, .. } => weights.len(),
            ModelParams::OneHidden { hidden_weights, .. } => hidden_weights.first().map_or(0, Vec::len),
        }
    }

    pub fn num_params(&self) -> usize {
        let dim = self.input_dim();
        match self.architecture() {
            Architecture::Linear => dim + 1,
            Architecture::OneHidden { width } => width * dim + 2 * width + 1,
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        match self {
            ModelParams::Linear { weights, bias } => {
                out.extend_from_slice(weights);
                out.push(*bias);
            }
            ModelParams::OneHidden {
                hidden_weights,
                hidden_bias,
                output_weights,
                output_bias,
            } => {
                hidden_weights.iter().for_each(|row| out.extend_from_slice(row));
                out.extend_from_slice(hidden_bias);
                out.extend_from_slice(output_weights);
                out.push(*output_bias);
            }
        }
        out
    }

    pub fn from_flat(arch: Architecture, input_dim: usize, values: &[f64]) -> Result<Self> {
        let mut params = Self::zeros(arch, input_dim);
        if values.len() != params.num_params() {
            return Err(Error::InvalidInput(format!(
                "expected {} parameter values, got {}",
                params.num_params(),
                values.len()
            )));
        }
        let mut it = values.iter().copied();
        params.for_each_mut(|p| *p = it.next().unwrap_or(0.0));
        params.validate()?;
        Ok(params)
    }

    /// Visits every parameter in flat order.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        match self {
            ModelParams::Linear { weights, bias } => {
                weights.iter_mut().for_each(&mut f);
                f(bias);
            }
            ModelParams::OneHidden {
                hidden_weights,
                hidden_bias,
                output_weights,
                output_bias,
            } => {
                hidden_weights.iter_mut().flatten().for_each(&mut f);
                hidden_bias.iter_mut().for_each(&mut f);
                output_weights.iter_mut().for_each(&mut f);
                f(output_bias);
            }
        }
    }

    /// `self[i] = f(self[i], other[i])` over matching shapes.
    pub fn combine(&mut self, other: &ModelParams, mut f: impl FnMut(f64, f64) -> f64) {
        let theirs = other.to_flat();
        debug_assert_eq!(theirs.len(), self.num_params());
        let mut it = theirs.into_iter();
        self.for_each_mut(|p| *p = f(*p, it.next().unwrap_or(0.0)));
    }

    pub fn validate(&self) -> Result<()> {
        if let ModelParams::OneHidden {
            hidden_weights,
            hidden_bias,
            output_weights,
            ..
        } = self
        {
            let dim = self.input_dim();
            if hidden_weights.len() != hidden_bias.len()
                || output_weights.len() != hidden_bias.len()
                || hidden_weights.iter().any(|r| r.len() != dim)
            {
                return Err(Error::InvalidInput("inconsistent hidden layer dimensions".into()));
            }
        }
        if self.to_flat().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("model has non-finite parameters".into()));
        }
        Ok(())
    }

    fn check_dim(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.input_dim() {
            return Err(Error::InvalidInput(format!(
                "model expects {} features, instance has {}",
                self.input_dim(),
                features.len()
            )));
        }
        Ok(())
    }

    /// Pre-sigmoid output; fills `hidden` with tanh activations for the
    /// one-hidden-layer model.
    pub(crate) fn logit(&self, x: &[f64], hidden: &mut Vec<f64>) -> f64 {
        match self {
            ModelParams::Linear { weights, bias } => dot(weights, x) + bias,
            ModelParams::OneHidden {
                hidden_weights,
                hidden_bias,
                output_weights,
                output_bias,
            } => {
                hidden.clear();
                hidden.extend(hidden_weights.iter().zip(hidden_bias).map(|(row, b)| (dot(row, x) + b).tanh()));
                dot(output_weights, hidden) + output_bias
            }
        }
    }

    pub fn predict_features(&self, features: &[f64]) -> Result<f64> {
        self.check_dim(features)?;
        Ok(open_unit(sigmoid(self.logit(features, &mut Vec::new()))))
    }

    pub fn predict(&self, instance: &Instance) -> Result<f64> {
        self.predict_features(&instance.features)
    }

    /// Adds `scale * d(logit)/d(params)` at `x` into `grad`.
    pub(crate) fn accumulate_logit_gradient(&self, x: &[f64], hidden: &[f64], scale: f64, grad: &mut ModelParams) {
        match (self, grad) {
            (ModelParams::Linear { .. }, ModelParams::Linear { weights, bias }) => {
                for (g, xi) in weights.iter_mut().zip(x) {
                    *g += scale * xi;
                }
                *bias += scale;
            }
            (
                ModelParams::OneHidden { output_weights: w2, .. },
                ModelParams::OneHidden {
                    hidden_weights,
                    hidden_bias,
                    output_weights,
                    output_bias,
                },
            ) => {
                for (k, &h) in hidden.iter().enumerate() {
                    output_weights[k] += scale * h;
                    let da = scale * w2[k] * (1.0 - h * h);
                    hidden_bias[k] += da;
                    for (g, xi) in hidden_weights[k].iter_mut().zip(x) {
                        *g += da * xi;
                    }
                }
                *output_bias += scale;
            }
            _ => unreachable!("gradient buffer shape differs from model"),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_model_predicts_half() {
        let m = ModelParams::zeros(Architecture::Linear, 3);
        assert_eq!(m.predict_features(&[1.0, -2.0, 5.0]).unwrap(), 0.5);
        let h = ModelParams::zeros(Architecture::OneHidden { width: 4 }, 3);
        assert_eq!(h.predict_features(&[1.0, -2.0, 5.0]).unwrap(), 0.5);
    }

    #[test]
    fn unit_weight_at_origin() {
        let m = ModelParams::Linear {
            weights: vec![1.0],
            bias: 0.0,
        };
        assert_eq!(m.predict_features(&[0.0]).unwrap(), 0.5);
    }

    #[test]
    fn worked_linear_value() {
        let m = ModelParams::Linear {
            weights: vec![2.0, -1.0],
            bias: 0.5,
        };
        let expected = 1.0 / (1.0 + (-1.5f64).exp());
        assert!((expected - 0.817574).abs() < 1e-6);
        assert!((m.predict_features(&[1.0, 1.0]).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn outputs_stay_inside_open_interval() {
        let m = ModelParams::Linear {
            weights: vec![1.0],
            bias: 0.0,
        };
        let hi = m.predict_features(&[800.0]).unwrap();
        let lo = m.predict_features(&[-800.0]).unwrap();
        assert!(hi < 1.0 && hi > 0.5);
        assert!(lo > 0.0 && lo < 0.5);
    }

    #[test]
    fn dimension_mismatch() {
        let m = ModelParams::zeros(Architecture::Linear, 2);
        assert!(matches!(m.predict_features(&[1.0]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn flat_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for arch in [Architecture::Linear, Architecture::OneHidden { width: 3 }] {
            let m = ModelParams::init(arch, 4, &mut rng);
            let back = ModelParams::from_flat(arch, 4, &m.to_flat()).unwrap();
            assert_eq!(m, back);
            assert_eq!(m.to_flat().len(), m.num_params());
            assert!(m.to_flat().iter().all(|v| v.abs() < INIT_SCALE));
        }
        assert!(ModelParams::from_flat(Architecture::Linear, 2, &[1.0]).is_err());
        assert!(ModelParams::from_flat(Architecture::Linear, 1, &[1.0, f64::NAN]).is_err());
    }
}
