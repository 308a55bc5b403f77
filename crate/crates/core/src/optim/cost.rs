//! Cross-entropy cost with the weight penalty.

use crate::network::Network;

/// Outputs are clamped to `[OUTPUT_CLAMP, 1 - OUTPUT_CLAMP]` inside the logs.
pub const OUTPUT_CLAMP: f64 = 1e-12;

/// `-sum_j [y_j ln a_j + (1 - y_j) ln(1 - a_j)]` for one example.
pub fn data_cost(outputs: &[f64], target: &[f64]) -> f64 {
    outputs
        .iter()
        .zip(target)
        .map(|(&a, &y)| {
            let a = a.clamp(OUTPUT_CLAMP, 1.0 - OUTPUT_CLAMP);
            -(y * a.ln() + (1.0 - y) * (1.0 - a).ln())
        })
        .sum()
}

/// Example cost plus `(alpha / 2 eta) * sum W^2` over all weights (biases excluded).
pub fn cost(outputs: &[f64], target: &[f64], net: &Network, alpha: f64, eta: f64) -> f64 {
    let penalty = if alpha == 0.0 { 0.0 } else { alpha / (2.0 * eta) * net.sum_squared_weights() };
    data_cost(outputs, target) + penalty
}
