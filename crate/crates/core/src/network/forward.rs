//! Forward propagation with accumulative-average field subtraction.
//!
//! For hidden layer `d`, with `m - 1` previous presentations recorded,
//!
//! ```text
//! z  = W a_prev + b
//! z' = z - Amp_d * (sum of previous raw z) / (m - 1)     (z' = z when m = 1)
//! a  = sigmoid(z')
//! ```
//!
//! In training mode the raw `z` is added to the running sum afterwards. The
//! output layer is a plain sigmoid layer. The subtracted term is a stored
//! statistic and carries no gradient.

use serde::{Deserialize, Serialize};

use super::{Network, NetworkError};

#[inline]
pub fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

/// Dot product with four independent partial sums.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let (ca, ra) = a.split_at(a.len() & !3);
    let (cb, rb) = b.split_at(ca.len());
    for (x, y) in ca.chunks_exact(4).zip(cb.chunks_exact(4)) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `sum_c w[c] * x[k_c] * x[l_c]`.
#[inline]
fn cross_dot(w: &[f64], first: &[u16], second: &[u16], x: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let n = w.len() & !3;
    let mut c = 0;
    while c < n {
        for lane in 0..4 {
            let i = c + lane;
            acc[lane] += w[i] * x[first[i] as usize] * x[second[i] as usize];
        }
        c += 4;
    }
    let mut tail = 0.0;
    for i in n..w.len() {
        tail += w[i] * x[first[i] as usize] * x[second[i] as usize];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Running sum of raw fields for one hidden layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldAccumulator {
    pub sum: Vec<f64>,
    /// Presentations recorded so far.
    pub count: u64,
}

impl FieldAccumulator {
    pub fn new(width: usize) -> Self {
        Self { sum: vec![0.0; width], count: 0 }
    }

    /// Mean of the recorded fields of unit `j` (0 before any presentation).
    pub fn mean(&self, j: usize) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum[j] / self.count as f64
        }
    }

    pub fn reset(&mut self) {
        self.sum.iter_mut().for_each(|s| *s = 0.0);
        self.count = 0;
    }
}

/// Per-hidden-layer accumulators. Once frozen, forward passes only read them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardState {
    pub layers: Vec<FieldAccumulator>,
    pub frozen: bool,
}

impl ForwardState {
    pub fn new(net: &Network) -> Self {
        let layers = net.architecture().hidden.iter().map(|&w| FieldAccumulator::new(w)).collect();
        Self { layers, frozen: false }
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn reset(&mut self) {
        self.layers.iter_mut().for_each(FieldAccumulator::reset);
    }

    fn matches(&self, net: &Network) -> bool {
        let hidden = &net.architecture().hidden;
        self.layers.len() == hidden.len() && self.layers.iter().zip(hidden).all(|(a, &w)| a.sum.len() == w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Read the accumulators, then record this presentation.
    Train,
    /// Read the accumulators only.
    Frozen,
}

/// Quantities of one forward pass, kept for backpropagation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Activations {
    /// The input the pass was run on.
    pub input: Vec<f64>,
    /// Raw fields `z` per weight layer.
    pub fields: Vec<Vec<f64>>,
    /// Fields after subtraction `z'` (equal to `z` on the output layer).
    pub shifted: Vec<Vec<f64>>,
    /// `sigmoid(z')` per weight layer; the last entry is the network output.
    pub outputs: Vec<Vec<f64>>,
}

impl Activations {
    pub fn output(&self) -> &[f64] {
        self.outputs.last().map_or(&[], Vec::as_slice)
    }

    /// Input to weight layer `d`.
    pub fn layer_input(&self, d: usize) -> &[f64] {
        if d == 0 {
            &self.input
        } else {
            &self.outputs[d - 1]
        }
    }
}

pub fn forward(
    net: &Network,
    state: &mut ForwardState,
    x: &[f64],
    amps: &[f64],
    mode: Mode,
) -> Result<Activations, NetworkError> {
    let mut act = Activations::default();
    forward_into(net, state, x, amps, mode, &mut act)?;
    Ok(act)
}

/// Like [`forward`], reusing the buffers of `act`.
pub fn forward_into(
    net: &Network,
    state: &mut ForwardState,
    x: &[f64],
    amps: &[f64],
    mode: Mode,
    act: &mut Activations,
) -> Result<(), NetworkError> {
    forward_impl(net, state, x, None, amps, mode, act)
}

fn forward_impl(
    net: &Network,
    state: &mut ForwardState,
    x: &[f64],
    first_fields: Option<&[f64]>,
    amps: &[f64],
    mode: Mode,
    act: &mut Activations,
) -> Result<(), NetworkError> {
    let arch = net.architecture();
    if x.len() != arch.n_inputs {
        return Err(NetworkError::InputDimension { expected: arch.n_inputs, found: x.len() });
    }
    if amps.len() != arch.hidden.len() {
        return Err(NetworkError::AmplitudeCount { expected: arch.hidden.len(), found: amps.len() });
    }
    if !state.matches(net) {
        return Err(NetworkError::StateShape);
    }
    let depth = arch.depth();
    act.input.clear();
    act.input.extend_from_slice(x);
    act.fields.resize_with(depth, Vec::new);
    act.shifted.resize_with(depth, Vec::new);
    act.outputs.resize_with(depth, Vec::new);
    let record = mode == Mode::Train && !state.frozen;

    for d in 0..depth {
        let layer = &net.layers[d];
        let (done, rest) = act.outputs.split_at_mut(d);
        let input: &[f64] = if d == 0 { &act.input } else { &done[d - 1] };
        let z = &mut act.fields[d];
        z.clear();
        if let (0, Some(f)) = (d, first_fields) {
            z.extend_from_slice(f);
        }
        for j in z.len()..layer.n_out {
            let mut f = dot(layer.row(j), input) + layer.bias[j];
            if d == 0 && arch.n_crosses > 0 {
                let (first, second) = net.crosses().unit(j);
                f += cross_dot(net.cross_row(j), first, second, input);
            }
            z.push(f);
        }
        let shifted = &mut act.shifted[d];
        shifted.clear();
        shifted.extend_from_slice(z);
        if d < arch.hidden.len() {
            let acc = &mut state.layers[d];
            if acc.count > 0 && amps[d] != 0.0 {
                let inv = 1.0 / acc.count as f64;
                for (s, &total) in shifted.iter_mut().zip(&acc.sum) {
                    *s -= amps[d] * (total * inv);
                }
            }
            if record {
                for (total, &f) in acc.sum.iter_mut().zip(z.iter()) {
                    *total += f;
                }
                acc.count += 1;
            }
        }
        let out = &mut rest[0];
        out.clear();
        out.extend(shifted.iter().map(|&s| sigmoid(s)));
    }
    Ok(())
}

/// Examples per block in [`forward_frozen_batch`].
const BLOCK: usize = 16;

/// Frozen-mode outputs for many inputs (`xs` holds `n x n_inputs` values),
/// appended to `out` row by row.
///
/// Results are bit-identical to calling [`forward`] in [`Mode::Frozen`] on
/// each input. The first layer is evaluated for a block of inputs per pass
/// over its weights, which matters when crosses make that layer large.
pub fn forward_frozen_batch(
    net: &Network,
    state: &ForwardState,
    xs: &[f64],
    amps: &[f64],
    out: &mut Vec<f64>,
) -> Result<(), NetworkError> {
    let arch = net.architecture();
    let n_in = arch.n_inputs;
    if !xs.len().is_multiple_of(n_in) {
        return Err(NetworkError::InputDimension { expected: n_in, found: xs.len() % n_in });
    }
    let mut s = state.clone();
    s.freeze();
    let layer = &net.layers[0];
    let mut act = Activations::default();
    let mut xt = vec![0.0; n_in * BLOCK];
    let mut fields = vec![0.0; layer.n_out * BLOCK];
    let mut z = Vec::with_capacity(layer.n_out);
    for block in xs.chunks(n_in * BLOCK) {
        // unused columns of a short final block keep stale values; their
        // fields are never read
        for (e, x) in block.chunks_exact(n_in).enumerate() {
            for (i, &v) in x.iter().enumerate() {
                xt[i * BLOCK + e] = v;
            }
        }
        first_layer_block(net, &xt, &mut fields);
        for (e, x) in block.chunks_exact(n_in).enumerate() {
            z.clear();
            z.extend((0..layer.n_out).map(|j| fields[j * BLOCK + e]));
            forward_impl(net, &mut s, x, Some(&z), amps, Mode::Frozen, &mut act)?;
            out.extend_from_slice(act.output());
        }
    }
    Ok(())
}

fn first_layer_block(net: &Network, xt: &[f64], fields: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports AVX2, checked just above.
        unsafe { first_layer_block_avx2(net, xt, fields) };
        return;
    }
    first_layer_block_generic(net, xt, fields);
}

/// Same code compiled with AVX2 enabled. No fused multiply-add is emitted,
/// so results equal the generic path bit for bit.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn first_layer_block_avx2(net: &Network, xt: &[f64], fields: &mut [f64]) {
    first_layer_block_generic(net, xt, fields);
}

#[inline(always)]
fn first_layer_block_generic(net: &Network, xt: &[f64], fields: &mut [f64]) {
    let layer = &net.layers[0];
    for (j, f) in fields.chunks_exact_mut(BLOCK).enumerate() {
        let f: &mut [f64; BLOCK] = f.try_into().unwrap();
        dot_block(layer.row(j), xt, f);
        f.iter_mut().for_each(|v| *v += layer.bias[j]);
        if net.architecture().n_crosses > 0 {
            let (first, second) = net.crosses().unit(j);
            cross_dot_block(net.cross_row(j), first, second, xt, f);
        }
    }
}

#[inline(always)]
fn column(xt: &[f64], i: usize) -> &[f64; BLOCK] {
    xt[i * BLOCK..(i + 1) * BLOCK].try_into().unwrap()
}

/// [`dot`] of `row` against a block of transposed inputs, same summation order.
#[inline(always)]
fn dot_block(row: &[f64], xt: &[f64], out: &mut [f64; BLOCK]) {
    let mut acc = [[0.0f64; BLOCK]; 4];
    let n = row.len() & !3;
    for c in (0..n).step_by(4) {
        for (lane, a) in acc.iter_mut().enumerate() {
            let w = row[c + lane];
            for (a, &x) in a.iter_mut().zip(column(xt, c + lane)) {
                *a += w * x;
            }
        }
    }
    let mut tail = [0.0f64; BLOCK];
    for (i, &w) in row.iter().enumerate().skip(n) {
        for (t, &x) in tail.iter_mut().zip(column(xt, i)) {
            *t += w * x;
        }
    }
    for e in 0..BLOCK {
        out[e] = (acc[0][e] + acc[1][e]) + (acc[2][e] + acc[3][e]) + tail[e];
    }
}

/// `out += cross_dot(..)` for a block of transposed inputs, same summation order.
#[inline(always)]
fn cross_dot_block(w: &[f64], first: &[u16], second: &[u16], xt: &[f64], out: &mut [f64; BLOCK]) {
    let mut acc = [[0.0f64; BLOCK]; 4];
    let n = w.len() & !3;
    for c in (0..n).step_by(4) {
        for (lane, a) in acc.iter_mut().enumerate() {
            let i = c + lane;
            let (xk, xl) = (column(xt, first[i] as usize), column(xt, second[i] as usize));
            for ((a, &p), &q) in a.iter_mut().zip(xk).zip(xl) {
                *a += w[i] * p * q;
            }
        }
    }
    let mut tail = [0.0f64; BLOCK];
    for i in n..w.len() {
        let (xk, xl) = (column(xt, first[i] as usize), column(xt, second[i] as usize));
        for ((t, &p), &q) in tail.iter_mut().zip(xk).zip(xl) {
            *t += w[i] * p * q;
        }
    }
    for e in 0..BLOCK {
        out[e] += (acc[0][e] + acc[1][e]) + (acc[2][e] + acc[3][e]) + tail[e];
    }
}

/// Index of the largest output; ties go to the lowest index.
pub fn predict(outputs: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in outputs.iter().enumerate().skip(1) {
        if v > outputs[best] {
            best = j;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CrossMap;
    use crate::network::{init_weights, Architecture, Layer};
    use crate::rng::{SeedTree, Stage};

    /// 2 inputs, 1 hidden, 1 output with hand-chosen weights.
    fn toy() -> Network {
        let arch = Architecture { n_inputs: 2, n_crosses: 0, hidden: vec![1], n_outputs: 1 };
        let mut net = Network::zeros(arch, CrossMap::empty(1)).unwrap();
        net.layers[0] = Layer { n_in: 2, n_out: 1, weights: vec![0.5, -0.25], bias: vec![0.1] };
        net.layers[1] = Layer { n_in: 1, n_out: 1, weights: vec![2.0], bias: vec![-1.0] };
        net
    }

    #[test]
    fn sigmoid_basics() {
        assert_eq!(sigmoid(0.0), 0.5);
        for u in [-30.0, -1.0, 1.0, 30.0] {
            let s = sigmoid(u);
            assert!(s > 0.0 && s < 1.0);
        }
    }

    #[test]
    fn toy_sequence_matches_scalar_oracle() {
        // Expected values from an independent scalar script with Amp = 0.3:
        //   ex1 x=(1,2):   z1=0.1,  z1'=0.1               a1=sigmoid(0.1)
        //   ex2 x=(-1,0.5): z1=-0.525, z1'=-0.525-0.3*0.1   a1=sigmoid(-0.555)
        let net = toy();
        let mut state = ForwardState::new(&net);
        let a1 = forward(&net, &mut state, &[1.0, 2.0], &[0.3], Mode::Train).unwrap();
        assert_eq!(a1.fields[0][0], 0.1);
        assert_eq!(a1.shifted[0][0], 0.1);
        let expect_out1 = 1.0 / (1.0 + (-(2.0 / (1.0 + (-0.1f64).exp()) - 1.0)).exp());
        assert!((a1.output()[0] - expect_out1).abs() < 1e-12);

        let a2 = forward(&net, &mut state, &[-1.0, 0.5], &[0.3], Mode::Train).unwrap();
        assert!((a2.fields[0][0] - (-0.625 + 0.1)).abs() < 1e-12);
        assert!((a2.shifted[0][0] - (-0.555)).abs() < 1e-12);
        let h = 1.0 / (1.0 + 0.555f64.exp());
        let expect_out2 = 1.0 / (1.0 + (-(2.0 * h - 1.0)).exp());
        assert!((a2.output()[0] - expect_out2).abs() < 1e-12);
        assert_eq!(a2.shifted[1], a2.fields[1], "no subtraction on the output layer");
        assert_eq!(state.layers[0].count, 2);
        assert!((state.layers[0].sum[0] - (0.1 - 0.525)).abs() < 1e-15);
    }

    #[test]
    fn zero_amplitude_is_textbook_mlp() {
        let arch = Architecture::mnist(&[16, 8]);
        let net = init_weights(&arch, CrossMap::empty(16), &mut SeedTree::new(1).rng(Stage::Init, &[])).unwrap();
        let mut state = ForwardState::new(&net);
        let x: Vec<f64> = (0..784).map(|p| ((p * 37 % 11) as f64 - 5.0) / 5.0).collect();
        for _ in 0..3 {
            let act = forward(&net, &mut state, &x, &[0.0, 0.0], Mode::Train).unwrap();
            let mut a = x.clone();
            for layer in &net.layers {
                a = (0..layer.n_out)
                    .map(|j| {
                        let z: f64 = layer.row(j).iter().zip(&a).map(|(w, v)| w * v).sum::<f64>() + layer.bias[j];
                        1.0 / (1.0 + (-z).exp())
                    })
                    .collect();
            }
            for (p, q) in a.iter().zip(act.output()) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn running_mean_matches_stored_list() {
        let net = toy();
        let mut state = ForwardState::new(&net);
        let mut raw = Vec::new();
        for t in 0..20 {
            let x = [(t as f64 * 0.37).sin(), (t as f64 * 0.11).cos()];
            let act = forward(&net, &mut state, &x, &[0.5], Mode::Train).unwrap();
            let prior_mean = if raw.is_empty() { 0.0 } else { raw.iter().sum::<f64>() / raw.len() as f64 };
            assert!((act.shifted[0][0] - (act.fields[0][0] - 0.5 * prior_mean)).abs() < 1e-12);
            raw.push(act.fields[0][0]);
        }
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        assert!((state.layers[0].mean(0) - mean).abs() < 1e-12);
    }

    #[test]
    fn frozen_mode_is_read_only() {
        let net = toy();
        let mut state = ForwardState::new(&net);
        forward(&net, &mut state, &[1.0, 2.0], &[0.3], Mode::Train).unwrap();
        let snapshot = state.clone();
        let a = forward(&net, &mut state, &[0.2, 0.1], &[0.3], Mode::Frozen).unwrap();
        let b = forward(&net, &mut state, &[0.2, 0.1], &[0.3], Mode::Frozen).unwrap();
        assert_eq!(a, b);
        assert_eq!(state, snapshot);
        state.freeze();
        forward(&net, &mut state, &[0.2, 0.1], &[0.3], Mode::Train).unwrap();
        assert_eq!(state.layers, snapshot.layers);
    }

    #[test]
    fn masked_inputs_contribute_nothing() {
        let arch = Architecture { n_inputs: 4, n_crosses: 0, hidden: vec![3], n_outputs: 2 };
        let mut net = init_weights(&arch, CrossMap::empty(3), &mut SeedTree::new(1).rng(Stage::Init, &[])).unwrap();
        let x = [0.3, 0.0, -1.2, 0.7];
        let mut state = ForwardState::new(&net);
        let before = forward(&net, &mut state, &x, &[0.0], Mode::Frozen).unwrap();
        for j in 0..3 {
            net.layers[0].row_mut(j)[1] = 1e6;
        }
        let after = forward(&net, &mut state, &x, &[0.0], Mode::Frozen).unwrap();
        assert_eq!(before.fields[0], after.fields[0]);
    }

    #[test]
    fn dimension_errors() {
        let net = toy();
        let mut state = ForwardState::new(&net);
        assert_eq!(
            forward(&net, &mut state, &[1.0], &[0.0], Mode::Train).unwrap_err(),
            NetworkError::InputDimension { expected: 2, found: 1 }
        );
        assert_eq!(
            forward(&net, &mut state, &[1.0, 1.0], &[], Mode::Train).unwrap_err(),
            NetworkError::AmplitudeCount { expected: 1, found: 0 }
        );
    }

    #[test]
    fn predict_ties_and_monotone_maps() {
        let mut out = vec![0.1; 10];
        out[1] = 0.9;
        assert_eq!(predict(&out), 1);
        assert_eq!(predict(&[0.3; 10]), 0);
        let o = [0.2, 0.7, 0.1, 0.7, 0.05];
        assert_eq!(predict(&o), 1);
        let mapped: Vec<f64> = o.iter().map(|v| (3.0 * v).exp() + 2.0).collect();
        assert_eq!(predict(&mapped), predict(&o));
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..13).map(|i| i as f64 * 0.5 - 2.0).collect();
        let b: Vec<f64> = (0..13).map(|i| (i as f64).sqrt()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn batch_matches_single_passes_bitwise() {
        use crate::data::{generate_crosses, PreparedSet};
        use crate::network::{init_weights, Architecture};
        use crate::rng::{SeedTree, Stage};
        let raw = crate::data::testutil::synthetic_set(7, 5);
        let set = PreparedSet::training(&raw).unwrap();
        let crosses = generate_crosses(&mut SeedTree::new(2).rng(Stage::Crosses, &[]), 37, 5, &set).unwrap();
        let arch = Architecture::mnist(&[5, 3]).with_crosses(37);
        let net = init_weights(&arch, crosses, &mut SeedTree::new(2).rng(Stage::Init, &[])).unwrap();
        let amps = [0.3, 0.1];
        let mut state = ForwardState::new(&net);
        for x in set.inputs().take(9) {
            forward(&net, &mut state, x, &amps, Mode::Train).unwrap();
        }
        let flat: Vec<f64> = set.inputs().flatten().copied().collect();
        let mut batched = Vec::new();
        forward_frozen_batch(&net, &state, &flat, &amps, &mut batched).unwrap();
        let mut single = Vec::new();
        for x in set.inputs() {
            single.extend_from_slice(forward(&net, &mut state.clone(), x, &amps, Mode::Frozen).unwrap().output());
        }
        assert_eq!(set.len(), 70);
        assert_eq!(batched, single);
    }
}
