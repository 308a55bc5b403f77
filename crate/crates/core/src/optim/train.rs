//! The online training loop.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{backprop_into, step, Gradients, HyperParamError, HyperParams, NumericError, OptimizerState, Strategy};
use crate::data::{label_ordered_schedule, DataError, LabelOrder, PreparedSet};
use crate::network::{forward_into, predict, Activations, ForwardState, Mode, Network, NetworkError};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    HyperParams(#[from] HyperParamError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub strategy: Strategy,
    pub hyper: HyperParams,
    #[serde(default)]
    pub label_order: LabelOrder,
    /// Clear the field accumulators at the start of every epoch.
    #[serde(default)]
    pub reset_field_each_epoch: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: u64,
    pub epochs: usize,
    /// Fraction of training examples classified correctly during the last epoch,
    /// measured on the fly before each update.
    pub last_epoch_accuracy: f64,
}

/// Train `net` one example at a time.
///
/// Every epoch draws a fresh label-ordered schedule from `rng`. The field
/// accumulators in `state` keep evolving across epochs unless the config
/// asks for a reset.
pub fn train<R: Rng + ?Sized>(
    net: &mut Network,
    state: &mut ForwardState,
    set: &PreparedSet,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<TrainReport, TrainError> {
    let h = &cfg.hyper;
    h.validate(net.architecture(), cfg.strategy)?;
    if set.is_empty() {
        return Err(DataError::EmptySet.into());
    }
    let mut opt = OptimizerState::new(net, cfg.strategy);
    let mut act = Activations::default();
    let mut grads = Gradients::default();
    let mut hits = 0usize;
    for epoch in 0..h.epochs {
        if cfg.reset_field_each_epoch && epoch > 0 {
            state.reset();
        }
        let schedule = label_ordered_schedule(set.labels(), &cfg.label_order, rng)?;
        hits = 0;
        for &i in schedule.indices() {
            forward_into(net, state, set.input(i), &h.field_amplitude, Mode::Train, &mut act)?;
            let target = set.target(i);
            if predict(act.output()) == set.label(i) as usize {
                hits += 1;
            }
            backprop_into(net, &act, &target, &mut grads);
            step(net, &mut opt, &grads, h)?;
        }
        log::trace!("epoch {} train accuracy {:.4}", epoch + 1, hits as f64 / set.len() as f64);
    }
    Ok(TrainReport { steps: opt.steps(), epochs: h.epochs, last_epoch_accuracy: hits as f64 / set.len() as f64 })
}

/// Accuracy on `set` with the accumulators read but not updated.
pub fn train_accuracy(net: &Network, state: &ForwardState, set: &PreparedSet, amps: &[f64]) -> Result<f64, NetworkError> {
    let mut s = state.clone();
    s.freeze();
    let mut act = Activations::default();
    let mut hits = 0usize;
    for i in 0..set.len() {
        forward_into(net, &mut s, set.input(i), amps, Mode::Frozen, &mut act)?;
        if predict(act.output()) == set.label(i) as usize {
            hits += 1;
        }
    }
    Ok(hits as f64 / set.len().max(1) as f64)
}
