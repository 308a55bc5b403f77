//! Cost, gradients, and the two online update rules.
//!
//! Updates are applied after every single example. Weight decay enters as
//! the multiplicative `(1 - alpha)` factor on weights only; biases are never
//! decayed.

mod backprop;
mod cost;
mod step;
mod train;

use serde::{Deserialize, Serialize};

use crate::network::Architecture;

pub use backprop::{backprop, backprop_into, DenseGradients, Gradients};
pub use cost::{cost, data_cost, OUTPUT_CLAMP};
pub use step::{accelerated_step, momentum_step, step, OptimizerState};
pub use train::{train, train_accuracy, TrainConfig, TrainError, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Fixed step size with velocity and friction.
    Momentum,
    /// Per-weight step sizes driven by `A * tanh(beta * gradient)`.
    Accelerated,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Momentum => "momentum",
            Strategy::Accelerated => "accelerated",
        })
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NumericError {
    #[error("non-finite weight after update {step} (weight layer {layer})")]
    NonFinite { step: u64, layer: usize },
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum HyperParamError {
    #[error("{name} = {value} outside {range}")]
    OutOfRange { name: &'static str, value: f64, range: &'static str },
    #[error("{name} has {found} entries, expected {expected}")]
    Length { name: &'static str, expected: usize, found: usize },
    #[error("epochs must be at least 1")]
    NoEpochs,
}

/// All tunable constants of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParams {
    /// Step size of the momentum rule.
    #[serde(default)]
    pub eta: f64,
    /// Friction.
    pub mu: f64,
    /// Weight-decay constant; weights are multiplied by `1 - alpha` per step.
    pub alpha: f64,
    /// Step-size decay rate of the accelerated rule.
    #[serde(default)]
    pub tau: f64,
    /// `A_d`, one per weight layer (accelerated rule).
    #[serde(default)]
    pub step_amplitude: Vec<f64>,
    /// `beta_d`, one per weight layer (accelerated rule).
    #[serde(default)]
    pub step_gain: Vec<f64>,
    /// Field-subtraction amplitude, one per hidden layer.
    pub field_amplitude: Vec<f64>,
    pub epochs: usize,
}

impl HyperParams {
    pub fn momentum(eta: f64, mu: f64, alpha: f64, field_amplitude: Vec<f64>, epochs: usize) -> Self {
        Self { eta, mu, alpha, tau: 0.0, step_amplitude: vec![], step_gain: vec![], field_amplitude, epochs }
    }

    pub fn validate(&self, arch: &Architecture, strategy: Strategy) -> Result<(), HyperParamError> {
        let unit = |name, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(HyperParamError::OutOfRange { name, value, range: "[0, 1]" })
            }
        };
        unit("mu", self.mu)?;
        unit("alpha", self.alpha)?;
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(HyperParamError::OutOfRange { name: "tau", value: self.tau, range: "[0, inf)" });
        }
        if !self.eta.is_finite() {
            return Err(HyperParamError::OutOfRange { name: "eta", value: self.eta, range: "finite" });
        }
        if self.epochs == 0 {
            return Err(HyperParamError::NoEpochs);
        }
        let len = |name, v: &[f64], expected: usize| {
            if v.len() != expected {
                return Err(HyperParamError::Length { name, expected, found: v.len() });
            }
            match v.iter().find(|x| !x.is_finite()) {
                Some(&value) => Err(HyperParamError::OutOfRange { name, value, range: "finite" }),
                None => Ok(()),
            }
        };
        len("field_amplitude", &self.field_amplitude, arch.hidden.len())?;
        if strategy == Strategy::Accelerated {
            len("step_amplitude", &self.step_amplitude, arch.depth())?;
            len("step_gain", &self.step_gain, arch.depth())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let arch = Architecture::mnist(&[100, 100]);
        let h = HyperParams::momentum(0.004, 0.95, 0.0001, vec![0.06, 0.03], 150);
        assert!(h.validate(&arch, Strategy::Momentum).is_ok());
        assert!(matches!(h.validate(&arch, Strategy::Accelerated), Err(HyperParamError::Length { name: "step_amplitude", .. })));
        let bad = HyperParams { mu: 1.5, ..h.clone() };
        assert!(matches!(bad.validate(&arch, Strategy::Momentum), Err(HyperParamError::OutOfRange { name: "mu", .. })));
        let bad = HyperParams { field_amplitude: vec![0.1], ..h.clone() };
        assert!(bad.validate(&arch, Strategy::Momentum).is_err());
        let bad = HyperParams { epochs: 0, ..h };
        assert_eq!(bad.validate(&arch, Strategy::Momentum), Err(HyperParamError::NoEpochs));
    }
}
