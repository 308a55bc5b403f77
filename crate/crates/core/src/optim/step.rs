//! The momentum and accelerated update rules.
//!
//! Momentum, per weight `w` with gradient `g`:
//!
//! ```text
//! v <- mu v - eta g
//! w <- (1 - alpha) w + v          (biases: b <- b + v_b)
//! ```
//!
//! Accelerated, with a per-weight step size `e` and the `A_d`, `beta_d` of
//! the weight layer:
//!
//! ```text
//! e <- e exp(-tau) + A_d tanh(beta_d g)
//! v <- mu v - |e| g
//! w <- (1 - alpha) w + v          (biases: b <- b + v_b)
//! ```
//!
//! Step sizes and velocities start at zero, which makes the first update
//! `e_0 = A_d tanh(beta_d g_first)` and `v_0 = -|e_0| g_first`.

use super::{Gradients, HyperParams, NumericError, Strategy};
use crate::network::Network;

#[derive(Debug, Clone, Default, PartialEq)]
struct Slots {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// Velocities, and for the accelerated rule per-parameter step sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    strategy: Strategy,
    velocity: Vec<Slots>,
    velocity_cross: Vec<f64>,
    step_size: Vec<Slots>,
    step_size_cross: Vec<f64>,
    steps: u64,
}

impl OptimizerState {
    pub fn new(net: &Network, strategy: Strategy) -> Self {
        let zeros = || -> Vec<Slots> {
            net.layers
                .iter()
                .map(|l| Slots { weights: vec![0.0; l.weights.len()], bias: vec![0.0; l.bias.len()] })
                .collect()
        };
        let accelerated = strategy == Strategy::Accelerated;
        Self {
            strategy,
            velocity: zeros(),
            velocity_cross: vec![0.0; net.cross_weights.len()],
            step_size: if accelerated { zeros() } else { Vec::new() },
            step_size_cross: if accelerated { vec![0.0; net.cross_weights.len()] } else { Vec::new() },
            steps: 0,
        }
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Weight velocities of layer `d`, row-major like the weights.
    pub fn velocity(&self, d: usize) -> (&[f64], &[f64]) {
        (&self.velocity[d].weights, &self.velocity[d].bias)
    }

    pub fn velocity_cross(&self) -> &[f64] {
        &self.velocity_cross
    }

    /// Per-weight step sizes of layer `d` (accelerated rule only).
    pub fn step_size(&self, d: usize) -> Option<(&[f64], &[f64])> {
        self.step_size.get(d).map(|s| (s.weights.as_slice(), s.bias.as_slice()))
    }

    pub fn step_size_cross(&self) -> &[f64] {
        &self.step_size_cross
    }
}

/// Dispatch on the state's strategy.
pub fn step(net: &mut Network, s: &mut OptimizerState, g: &Gradients, h: &HyperParams) -> Result<(), NumericError> {
    match s.strategy {
        Strategy::Momentum => momentum_step(net, s, g, h),
        Strategy::Accelerated => accelerated_step(net, s, g, h),
    }
}

/// `probe` stays 0 while every written weight is finite.
#[inline]
fn momentum_row(w: &mut [f64], v: &mut [f64], input: &[f64], delta: f64, mu: f64, eta: f64, keep: f64) -> f64 {
    let mut probe = 0.0;
    for ((w, v), &x) in w.iter_mut().zip(v.iter_mut()).zip(input) {
        let g = delta * x;
        *v = mu * *v - eta * g;
        *w = keep * *w + *v;
        probe += *w * 0.0;
    }
    probe
}

pub fn momentum_step(net: &mut Network, s: &mut OptimizerState, g: &Gradients, h: &HyperParams) -> Result<(), NumericError> {
    s.steps += 1;
    let keep = 1.0 - h.alpha;
    let (mu, eta) = (h.mu, h.eta);
    for d in 0..net.layers.len() {
        let layer = &mut net.layers[d];
        let vel = &mut s.velocity[d];
        let n_in = layer.n_in;
        let input = &g.inputs[d];
        let mut probe = 0.0;
        for j in 0..layer.n_out {
            let dj = g.deltas[d][j];
            let r = j * n_in..(j + 1) * n_in;
            probe += momentum_row(&mut layer.weights[r.clone()], &mut vel.weights[r], input, dj, mu, eta, keep);
            let vb = &mut vel.bias[j];
            *vb = mu * *vb - eta * dj;
            layer.bias[j] += *vb;
            probe += layer.bias[j] * 0.0;
        }
        if d == 0 && !net.cross_weights.is_empty() {
            let n = net.architecture().n_crosses;
            let x = &g.inputs[0];
            let (crosses, cross_weights) = net.crosses_with_weights_mut();
            for j in 0..crosses.n_units() {
                let dj = g.deltas[0][j];
                let (first, second) = crosses.unit(j);
                for c in 0..n {
                    let k = j * n + c;
                    let gc = dj * x[first[c] as usize] * x[second[c] as usize];
                    let v = &mut s.velocity_cross[k];
                    *v = mu * *v - eta * gc;
                    let w = &mut cross_weights[k];
                    *w = keep * *w + *v;
                    probe += *w * 0.0;
                }
            }
        }
        if probe != 0.0 || !probe.is_finite() {
            return Err(NumericError::NonFinite { step: s.steps, layer: d + 1 });
        }
    }
    Ok(())
}

struct Accel {
    decay: f64,
    amplitude: f64,
    gain: f64,
    mu: f64,
    keep: f64,
}

impl Accel {
    /// Update one parameter in place; returns the new weight.
    #[inline]
    fn update(&self, w: &mut f64, v: &mut f64, e: &mut f64, g: f64, keep: f64) -> f64 {
        let drive = if g == 0.0 { 0.0 } else { self.amplitude * (self.gain * g).tanh() };
        let prev = *e;
        *e = prev * self.decay + drive;
        debug_assert!(e.abs() <= prev.abs() * self.decay + self.amplitude.abs() + 1e-12 * (1.0 + prev.abs()));
        *v = self.mu * *v - e.abs() * g;
        *w = keep * *w + *v;
        *w
    }
}

pub fn accelerated_step(net: &mut Network, s: &mut OptimizerState, g: &Gradients, h: &HyperParams) -> Result<(), NumericError> {
    s.steps += 1;
    let decay = (-h.tau).exp();
    let keep = 1.0 - h.alpha;
    for d in 0..net.layers.len() {
        let rule = Accel { decay, amplitude: h.step_amplitude[d], gain: h.step_gain[d], mu: h.mu, keep };
        let layer = &mut net.layers[d];
        let vel = &mut s.velocity[d];
        let eta = &mut s.step_size[d];
        let n_in = layer.n_in;
        let input = &g.inputs[d];
        let mut probe = 0.0;
        for j in 0..layer.n_out {
            let dj = g.deltas[d][j];
            for i in 0..n_in {
                let k = j * n_in + i;
                probe += rule.update(&mut layer.weights[k], &mut vel.weights[k], &mut eta.weights[k], dj * input[i], rule.keep) * 0.0;
            }
            probe += rule.update(&mut layer.bias[j], &mut vel.bias[j], &mut eta.bias[j], dj, 1.0) * 0.0;
        }
        if d == 0 && !net.cross_weights.is_empty() {
            let n = net.architecture().n_crosses;
            let x = &g.inputs[0];
            let (crosses, cross_weights) = net.crosses_with_weights_mut();
            for j in 0..crosses.n_units() {
                let dj = g.deltas[0][j];
                let (first, second) = crosses.unit(j);
                for c in 0..n {
                    let k = j * n + c;
                    let gc = dj * x[first[c] as usize] * x[second[c] as usize];
                    probe += rule.update(
                        &mut cross_weights[k],
                        &mut s.velocity_cross[k],
                        &mut s.step_size_cross[k],
                        gc,
                        rule.keep,
                    ) * 0.0;
                }
            }
        }
        if probe != 0.0 || !probe.is_finite() {
            return Err(NumericError::NonFinite { step: s.steps, layer: d + 1 });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CrossMap;
    use crate::network::{forward, Architecture, ForwardState, Layer, Mode};
    use crate::optim::backprop;

    /// One input, one hidden unit, one output: W1 is a single scalar weight.
    fn scalar_net(w1: f64) -> Network {
        let arch = Architecture { n_inputs: 1, n_crosses: 0, hidden: vec![1], n_outputs: 1 };
        let mut net = Network::zeros(arch, CrossMap::empty(1)).unwrap();
        net.layers[0] = Layer { n_in: 1, n_out: 1, weights: vec![w1], bias: vec![0.0] };
        net.layers[1] = Layer { n_in: 1, n_out: 1, weights: vec![0.0], bias: vec![0.0] };
        net
    }

    /// Gradient factors with the given deltas and unit inputs everywhere.
    fn grads(d0: f64, d1: f64) -> Gradients {
        Gradients { deltas: vec![vec![d0], vec![d1]], inputs: vec![vec![1.0], vec![1.0]] }
    }

    fn accel_params() -> HyperParams {
        HyperParams {
            eta: 0.0,
            mu: 0.5,
            alpha: 0.1,
            tau: std::f64::consts::LN_2,
            step_amplitude: vec![0.2, 0.0],
            step_gain: vec![1.0, 0.0],
            field_amplitude: vec![0.0],
            epochs: 1,
        }
    }

    #[test]
    fn momentum_two_steps_by_hand() {
        // mu = 0.5, eta = 0.1, alpha = 0.2, w0 = 1, b0 = 0, gradients 2 then -1
        let (mu, eta, keep) = (0.5, 0.1, 1.0 - 0.2);
        let v1 = -eta * 2.0;
        let w1 = keep * 1.0 + v1;
        let v2 = mu * v1 - eta * -1.0;
        let w2 = keep * w1 + v2;
        let b2 = v1 + v2;

        let mut net = scalar_net(1.0);
        let h = HyperParams::momentum(0.1, 0.5, 0.2, vec![0.0], 1);
        let mut s = OptimizerState::new(&net, Strategy::Momentum);
        momentum_step(&mut net, &mut s, &grads(2.0, 0.0), &h).unwrap();
        assert_eq!(s.velocity(0).0[0], v1);
        assert_eq!(net.layers[0].weights[0], w1);
        assert!((w1 - 0.6).abs() < 1e-15);
        momentum_step(&mut net, &mut s, &grads(-1.0, 0.0), &h).unwrap();
        assert_eq!(s.velocity(0).0[0], v2);
        assert_eq!(net.layers[0].weights[0], w2);
        assert!((w2 - 0.48).abs() < 1e-15);
        // biases follow the same velocity without decay
        assert_eq!(net.layers[0].bias[0], b2);
    }

    #[test]
    fn accelerated_three_steps_by_hand() {
        // decay = exp(-ln 2) = 0.5, A = 0.2, beta = 1, mu = 0.5, alpha = 0.1, w0 = 1
        // gradients 0.5, 0.5, -1
        let t = |x: f64| x.tanh();
        let (a, mu, keep) = (0.2, 0.5, 0.9);
        let e1 = a * t(0.5);
        let v1 = -e1 * 0.5;
        let w1 = keep * 1.0 + v1;
        let e2 = 0.5 * e1 + a * t(0.5);
        let v2 = mu * v1 - e2 * 0.5;
        let w2 = keep * w1 + v2;
        let e3 = 0.5 * e2 + a * t(-1.0);
        let v3 = mu * v2 - e3.abs() * -1.0;
        let w3 = keep * w2 + v3;

        let mut net = scalar_net(1.0);
        let h = accel_params();
        let mut s = OptimizerState::new(&net, Strategy::Accelerated);
        let mut expected = vec![];
        for (g, e, v, w) in [(0.5, e1, v1, w1), (0.5, e2, v2, w2), (-1.0, e3, v3, w3)] {
            accelerated_step(&mut net, &mut s, &grads(g, 0.0), &h).unwrap();
            expected.push((e, v, w));
            assert!((s.step_size(0).unwrap().0[0] - e).abs() < 1e-15);
            assert!((s.velocity(0).0[0] - v).abs() < 1e-15);
            assert!((net.layers[0].weights[0] - w).abs() < 1e-15);
        }
        assert!(e3 < 0.0, "step size may change sign; its magnitude is used");
    }

    #[test]
    fn accelerated_zero_gradient_decays() {
        let mut net = scalar_net(1.0);
        let h = accel_params();
        let mut s = OptimizerState::new(&net, Strategy::Accelerated);
        accelerated_step(&mut net, &mut s, &grads(0.5, 0.0), &h).unwrap();
        let (e0, v0, w0, b0) = (s.step_size(0).unwrap().0[0], s.velocity(0).0[0], net.layers[0].weights[0], net.layers[0].bias[0]);
        let vb0 = s.velocity(0).1[0];
        accelerated_step(&mut net, &mut s, &grads(0.0, 0.0), &h).unwrap();
        assert!((s.step_size(0).unwrap().0[0] - e0 * 0.5).abs() < 1e-15);
        assert!((s.velocity(0).0[0] - 0.5 * v0).abs() < 1e-15);
        assert!((net.layers[0].weights[0] - (0.9 * w0 + 0.5 * v0)).abs() < 1e-15);
        // bias: no decay factor
        assert!((net.layers[0].bias[0] - (b0 + 0.5 * vb0)).abs() < 1e-15);
    }

    #[test]
    fn plain_descent_when_no_momentum_or_decay() {
        let arch = Architecture { n_inputs: 3, n_crosses: 0, hidden: vec![2], n_outputs: 2 };
        let mut rng = crate::rng::SeedTree::new(3).rng(crate::rng::Stage::Init, &[]);
        let mut net = crate::network::init_weights(&arch, CrossMap::empty(2), &mut rng).unwrap();
        let before = net.clone();
        let mut st = ForwardState::new(&net);
        let act = forward(&net, &mut st, &[0.5, -1.0, 0.25], &[0.0], Mode::Train).unwrap();
        let g = backprop(&net, &act, &[1.0, 0.0]);
        let dense = g.to_dense(&net);
        let h = HyperParams::momentum(0.05, 0.0, 0.0, vec![0.0], 1);
        let mut s = OptimizerState::new(&net, Strategy::Momentum);
        momentum_step(&mut net, &mut s, &g, &h).unwrap();
        for d in 0..2 {
            for (k, w) in net.layers[d].weights.iter().enumerate() {
                assert_eq!(*w, before.layers[d].weights[k] - 0.05 * dense.layers[d].0[k]);
            }
            for (k, b) in net.layers[d].bias.iter().enumerate() {
                assert_eq!(*b, before.layers[d].bias[k] - 0.05 * dense.layers[d].1[k]);
            }
        }
    }

    #[test]
    fn weight_decay_spares_biases() {
        let mut net = scalar_net(2.0);
        net.layers[0].bias[0] = 3.0;
        let h = HyperParams::momentum(0.1, 0.9, 0.25, vec![0.0], 1);
        let mut s = OptimizerState::new(&net, Strategy::Momentum);
        momentum_step(&mut net, &mut s, &grads(0.0, 0.0), &h).unwrap();
        assert_eq!(net.layers[0].weights[0], 1.5);
        assert_eq!(net.layers[0].bias[0], 3.0);
    }

    #[test]
    fn overflow_aborts() {
        let mut net = scalar_net(1.0);
        let h = HyperParams::momentum(1e308, 0.0, 0.0, vec![0.0], 1);
        let mut s = OptimizerState::new(&net, Strategy::Momentum);
        let err = momentum_step(&mut net, &mut s, &grads(1e10, 0.0), &h).unwrap_err();
        assert_eq!(err, NumericError::NonFinite { step: 1, layer: 1 });
    }
}
