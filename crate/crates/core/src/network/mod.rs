//! Feedforward sigmoid networks with optional input crosses on the first
//! hidden layer and running-mean field subtraction on hidden layers.

mod checkpoint;
mod forward;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{CrossMap, N_LABELS, PIXELS};

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CheckpointError};
pub use forward::{
    dot, forward, forward_frozen_batch, forward_into, predict, sigmoid, Activations, FieldAccumulator,
    ForwardState, Mode,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NetworkError {
    #[error("input has {found} components, network expects {expected}")]
    InputDimension { expected: usize, found: usize },
    #[error("{found} field amplitudes given for {expected} hidden layers")]
    AmplitudeCount { expected: usize, found: usize },
    #[error("cross map feeds {found} units with {per_unit} crosses, architecture wants {expected_units} x {expected_per_unit}")]
    CrossShape { expected_units: usize, expected_per_unit: usize, found: usize, per_unit: usize },
    #[error("forward state was built for a different architecture")]
    StateShape,
    #[error("architecture needs at least one hidden layer")]
    NoHiddenLayer,
}

/// Layer sizes. Crosses, when present, feed only the first hidden layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub n_inputs: usize,
    pub n_crosses: usize,
    pub hidden: Vec<usize>,
    pub n_outputs: usize,
}

impl Architecture {
    /// `hidden` layers of the given sizes on MNIST inputs, no crosses.
    pub fn mnist(hidden: &[usize]) -> Self {
        Self { n_inputs: PIXELS, n_crosses: 0, hidden: hidden.to_vec(), n_outputs: N_LABELS }
    }

    pub fn with_crosses(mut self, n_crosses: usize) -> Self {
        self.n_crosses = n_crosses;
        self
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.hidden.is_empty() {
            return Err(NetworkError::NoHiddenLayer);
        }
        Ok(())
    }

    /// Number of weight layers (hidden layers + output layer).
    pub fn depth(&self) -> usize {
        self.hidden.len() + 1
    }

    /// `(inputs, outputs)` of weight layer `d`, not counting crosses.
    pub fn layer_shape(&self, d: usize) -> (usize, usize) {
        let n_in = if d == 0 { self.n_inputs } else { self.hidden[d - 1] };
        let n_out = if d < self.hidden.len() { self.hidden[d] } else { self.n_outputs };
        (n_in, n_out)
    }

    pub fn n_parameters(&self) -> usize {
        (0..self.depth()).map(|d| self.layer_shape(d)).map(|(i, o)| (i + 1) * o).sum::<usize>()
            + self.hidden[0] * self.n_crosses
    }
}

/// Dense weights `n_out x n_in` (row per receiving unit) plus biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self { n_in, n_out, weights: vec![0.0; n_in * n_out], bias: vec![0.0; n_out] }
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.weights[j * self.n_in..(j + 1) * self.n_in]
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.weights[j * self.n_in..(j + 1) * self.n_in]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: Architecture,
    pub layers: Vec<Layer>,
    crosses: CrossMap,
    /// `hidden[0] x n_crosses`, row per first-layer unit, aligned with `crosses`.
    pub cross_weights: Vec<f64>,
}

impl Network {
    /// All-zero weights and biases with the given wiring.
    pub fn zeros(arch: Architecture, crosses: CrossMap) -> Result<Self, NetworkError> {
        arch.validate()?;
        let wired = crosses.per_unit() == arch.n_crosses
            && (arch.n_crosses == 0 || crosses.n_units() == arch.hidden[0]);
        if !wired {
            return Err(NetworkError::CrossShape {
                expected_units: arch.hidden[0],
                expected_per_unit: arch.n_crosses,
                found: crosses.n_units(),
                per_unit: crosses.per_unit(),
            });
        }
        let layers = (0..arch.depth())
            .map(|d| {
                let (i, o) = arch.layer_shape(d);
                Layer::zeros(i, o)
            })
            .collect();
        let cross_weights = vec![0.0; arch.hidden[0] * arch.n_crosses];
        Ok(Self { arch, layers, crosses, cross_weights })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn crosses(&self) -> &CrossMap {
        &self.crosses
    }

    pub fn cross_row(&self, j: usize) -> &[f64] {
        let n = self.arch.n_crosses;
        &self.cross_weights[j * n..(j + 1) * n]
    }

    /// The cross wiring together with mutable cross weights.
    pub fn crosses_with_weights_mut(&mut self) -> (&CrossMap, &mut [f64]) {
        (&self.crosses, &mut self.cross_weights)
    }

    pub fn sum_squared_weights(&self) -> f64 {
        self.layers.iter().flat_map(|l| &l.weights).chain(&self.cross_weights).map(|w| w * w).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .chain(&self.cross_weights)
            .all(|v| v.is_finite())
    }
}

fn standardize(row: &mut [f64]) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    row.iter_mut().for_each(|w| *w -= mean);
    let std = (row.iter().map(|w| w * w).sum::<f64>() / n).sqrt();
    if std > 0.0 {
        row.iter_mut().for_each(|w| *w /= std);
    }
}

/// Gaussian initialization.
///
/// Every weight is drawn from N(0, 1). Each receiving unit's full incoming
/// row (dense inputs and, on the first layer, its crosses) is then shifted
/// and scaled to empirical mean 0 and population std 1. Cross weights are
/// finally multiplied by `sqrt(n_inputs / n_crosses)`. Biases start at 1.
pub fn init_weights<R: Rng + ?Sized>(
    arch: &Architecture,
    crosses: CrossMap,
    rng: &mut R,
) -> Result<Network, NetworkError> {
    let mut net = Network::zeros(arch.clone(), crosses)?;
    let n_cross = arch.n_crosses;
    let mut row = Vec::new();
    for d in 0..arch.depth() {
        let layer = &mut net.layers[d];
        let n_in = layer.n_in;
        for j in 0..layer.n_out {
            let extra = if d == 0 { n_cross } else { 0 };
            row.clear();
            row.extend((0..n_in + extra).map(|_| rng.sample::<f64, _>(StandardNormal)));
            standardize(&mut row);
            layer.row_mut(j).copy_from_slice(&row[..n_in]);
            if extra > 0 {
                net.cross_weights[j * n_cross..(j + 1) * n_cross].copy_from_slice(&row[n_in..]);
            }
        }
        layer.bias.iter_mut().for_each(|b| *b = 1.0);
    }
    if n_cross > 0 {
        let scale = cross_rescale(arch.n_inputs, n_cross);
        net.cross_weights.iter_mut().for_each(|w| *w *= scale);
    }
    Ok(net)
}

/// `sqrt(regular inputs / crosses)`.
pub fn cross_rescale(n_inputs: usize, n_crosses: usize) -> f64 {
    (n_inputs as f64 / n_crosses as f64).sqrt()
}
