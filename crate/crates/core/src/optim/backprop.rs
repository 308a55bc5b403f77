//! Backpropagation for one example.
//!
//! With sigmoid outputs and cross-entropy, the output delta is `a - y`.
//! Hidden deltas pass through `a (1 - a)`, the derivative at the shifted
//! field. The per-example gradient of every weight matrix is the outer
//! product `delta_d x input_d`, so [`Gradients`] stores only the factors.

use crate::network::{Activations, Network};

/// Factored per-example gradient of the data cost.
///
/// `dC/dW_d[j][i] = deltas[d][j] * inputs[d][i]`, `dC/db_d[j] = deltas[d][j]`, and
/// for a first-layer cross `(k, l)` of unit `j`: `deltas[0][j] * x_k * x_l`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    pub deltas: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn weight(&self, d: usize, j: usize, i: usize) -> f64 {
        self.deltas[d][j] * self.inputs[d][i]
    }

    pub fn bias(&self, d: usize, j: usize) -> f64 {
        self.deltas[d][j]
    }

    pub fn cross(&self, net: &Network, j: usize, c: usize) -> f64 {
        let (a, b) = net.crosses().unit(j);
        let x = &self.inputs[0];
        self.deltas[0][j] * x[a[c] as usize] * x[b[c] as usize]
    }

    /// Every gradient component, laid out like the network's parameters.
    pub fn to_dense(&self, net: &Network) -> DenseGradients {
        let layers = net
            .layers
            .iter()
            .enumerate()
            .map(|(d, l)| {
                let w = (0..l.n_out).flat_map(|j| (0..l.n_in).map(move |i| (j, i))).map(|(j, i)| self.weight(d, j, i)).collect();
                (w, self.deltas[d].clone())
            })
            .collect();
        let n = net.architecture().n_crosses;
        let cross = (0..net.crosses().n_units() * n).map(|k| self.cross(net, k / n.max(1), k % n.max(1))).collect();
        DenseGradients { layers, cross }
    }

    pub fn is_finite(&self) -> bool {
        self.deltas.iter().flatten().all(|v| v.is_finite())
    }
}

/// Materialized gradients: `(weights, biases)` per layer, then cross weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGradients {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
    pub cross: Vec<f64>,
}

pub fn backprop(net: &Network, act: &Activations, target: &[f64]) -> Gradients {
    let mut g = Gradients::default();
    backprop_into(net, act, target, &mut g);
    g
}

/// Like [`backprop`], reusing the buffers of `g`.
pub fn backprop_into(net: &Network, act: &Activations, target: &[f64], g: &mut Gradients) {
    let depth = net.layers.len();
    g.deltas.resize_with(depth, Vec::new);
    g.inputs.resize_with(depth, Vec::new);
    for d in 0..depth {
        g.inputs[d].clear();
        g.inputs[d].extend_from_slice(act.layer_input(d));
    }
    let top = &mut g.deltas[depth - 1];
    top.clear();
    top.extend(act.output().iter().zip(target).map(|(a, y)| a - y));

    for d in (0..depth - 1).rev() {
        let (lower, upper) = g.deltas.split_at_mut(d + 1);
        let above = &upper[0];
        let next = &net.layers[d + 1];
        let delta = &mut lower[d];
        delta.clear();
        delta.resize(next.n_in, 0.0);
        for (j, &dj) in above.iter().enumerate() {
            if dj == 0.0 {
                continue;
            }
            for (acc, &w) in delta.iter_mut().zip(next.row(j)) {
                *acc += w * dj;
            }
        }
        for (acc, &a) in delta.iter_mut().zip(&act.outputs[d]) {
            *acc *= a * (1.0 - a);
        }
    }
    debug_assert!(g.deltas.iter().zip(&net.layers).all(|(d, l)| d.len() == l.n_out));
}
