//! Embedding a two-hidden-layer network into three hidden layers.
//!
//! Each output unit `j` of the source is copied into a group of ten units
//! of a new third hidden layer, which therefore outputs `sigmoid(z_j)` ten
//! times. Every group member connects with weight 1 to output `j` and 0 to
//! the others, and all output biases are 0, so the new output field for
//! label `j` is `10 sigmoid(z_j)`. That is increasing in `z_j`, so both
//! networks choose the same label for any input. Field subtraction plays
//! no part: the statement is about static weights.

use crate::data::N_LABELS;
use crate::network::{forward_frozen_batch, predict, Architecture, ForwardState, Network, NetworkError};

/// Third-layer units per source output unit.
pub const GROUP: usize = 10;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EquivalenceError {
    #[error("source must have exactly 2 hidden layers and {N_LABELS} outputs, found hidden {hidden:?} and {outputs} outputs")]
    SourceShape { hidden: Vec<usize>, outputs: usize },
    #[error("networks take {0} and {1} inputs")]
    InputMismatch(usize, usize),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// A source network, its expansion, and which output each third-layer unit
/// replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalencePair {
    pub source: Network,
    pub expanded: Network,
    /// `groups[u]` is the source output copied by third-layer unit `u`.
    pub groups: Vec<usize>,
}

impl EquivalencePair {
    pub fn new(source: Network) -> Result<Self, EquivalenceError> {
        let expanded = expand_two_to_three(&source)?;
        let groups = (0..GROUP * source.architecture().n_outputs).map(|u| u / GROUP).collect();
        Ok(Self { source, expanded, groups })
    }
}

/// The expanded network: layers one and two (and any crosses) copied,
/// layer three made of output-unit replicas, a 0/1 output layer with zero
/// biases.
pub fn expand_two_to_three(source: &Network) -> Result<Network, EquivalenceError> {
    let arch = source.architecture();
    if arch.hidden.len() != 2 || arch.n_outputs != N_LABELS {
        return Err(EquivalenceError::SourceShape { hidden: arch.hidden.clone(), outputs: arch.n_outputs });
    }
    let n_out = arch.n_outputs;
    let third = GROUP * n_out;
    let mut hidden = arch.hidden.clone();
    hidden.push(third);
    let expanded_arch = Architecture { hidden, ..arch.clone() };
    let mut net = Network::zeros(expanded_arch, source.crosses().clone())?;
    net.cross_weights.copy_from_slice(&source.cross_weights);
    net.layers[0] = source.layers[0].clone();
    net.layers[1] = source.layers[1].clone();

    let src_out = &source.layers[2];
    let replicas = &mut net.layers[2];
    for u in 0..third {
        let j = u / GROUP;
        replicas.row_mut(u).copy_from_slice(src_out.row(j));
        replicas.bias[u] = src_out.bias[j];
    }
    let out = &mut net.layers[3];
    for u in 0..third {
        out.row_mut(u / GROUP)[u] = 1.0;
    }
    out.bias.iter_mut().for_each(|b| *b = 0.0);
    Ok(net)
}

/// Predicted label for each input of `inputs` (`n x n_inputs`, row-major),
/// static weights, no field subtraction.
pub fn decisions(net: &Network, inputs: &[f64]) -> Result<Vec<usize>, NetworkError> {
    let amps = vec![0.0; net.architecture().hidden.len()];
    let mut out = Vec::with_capacity(inputs.len() / net.architecture().n_inputs.max(1) * N_LABELS);
    forward_frozen_batch(net, &ForwardState::new(net), inputs, &amps, &mut out)?;
    Ok(out.chunks_exact(net.architecture().n_outputs).map(predict).collect())
}

/// Fraction of inputs on which `a` and `b` predict the same label.
pub fn decision_agreement(a: &Network, b: &Network, inputs: &[f64]) -> Result<f64, EquivalenceError> {
    let (na, nb) = (a.architecture().n_inputs, b.architecture().n_inputs);
    if na != nb {
        return Err(EquivalenceError::InputMismatch(na, nb));
    }
    let (da, db) = (decisions(a, inputs)?, decisions(b, inputs)?);
    if da.is_empty() {
        return Ok(1.0);
    }
    let same = da.iter().zip(&db).filter(|(x, y)| x == y).count();
    Ok(same as f64 / da.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CrossMap;
    use crate::network::{forward, init_weights, sigmoid, Mode};
    use crate::rng::{SeedTree, Stage};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn source(seed: u64, n_in: usize) -> Network {
        let arch = Architecture { n_inputs: n_in, n_crosses: 0, hidden: vec![100, 100], n_outputs: 10 };
        let mut rng = SeedTree::new(seed).rng(Stage::Init, &[]);
        let mut net = init_weights(&arch, CrossMap::empty(100), &mut rng).unwrap();
        // smaller weights keep the outputs away from saturation, so the
        // decisions depend on the weights in an interesting way
        for l in &mut net.layers {
            l.weights.iter_mut().for_each(|w| *w *= 0.2);
            l.bias.iter_mut().for_each(|b| *b = rng.random_range(-1.0..1.0));
        }
        net
    }

    fn inputs(seed: u64, n: usize, n_in: usize) -> Vec<f64> {
        let mut rng = SeedTree::new(seed).rng(Stage::Auxiliary, &[]);
        (0..n * n_in).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    }

    #[test]
    fn expanded_output_is_sigmoid_of_ten_sigmoids() {
        let src = source(1, 784);
        let exp = expand_two_to_three(&src).unwrap();
        let x = inputs(2, 5, 784);
        for row in x.chunks(784) {
            let s = forward(&src, &mut ForwardState::new(&src), row, &[0.0; 2], Mode::Frozen).unwrap();
            let e = forward(&exp, &mut ForwardState::new(&exp), row, &[0.0; 3], Mode::Frozen).unwrap();
            for j in 0..10 {
                let z = s.fields[2][j];
                assert!((e.fields[3][j] - 10.0 * sigmoid(z)).abs() < 1e-12);
                assert!((e.output()[j] - sigmoid(10.0 * sigmoid(z))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn random_pairs_agree_everywhere() {
        for seed in 0..20 {
            let src = source(100 + seed, 784);
            let pair = EquivalencePair::new(src).unwrap();
            assert_eq!(pair.groups.iter().filter(|&&g| g == 3).count(), GROUP);
            let x = inputs(200 + seed, 1000, 784);
            assert_eq!(decision_agreement(&pair.source, &pair.expanded, &x).unwrap(), 1.0, "seed {seed}");
        }
    }

    #[test]
    fn saturated_pairs_agree() {
        for seed in 0..5 {
            let src = unbiased(300 + seed);
            let exp = expand_two_to_three(&src).unwrap();
            assert_eq!(decision_agreement(&src, &exp, &inputs(400 + seed, 2000, 784)).unwrap(), 1.0, "seed {seed}");
        }
    }

    #[test]
    fn raw_outputs_differ() {
        let src = source(3, 784);
        let exp = expand_two_to_three(&src).unwrap();
        let x = inputs(4, 1, 784);
        let mut a = Vec::new();
        let mut b = Vec::new();
        forward_frozen_batch(&src, &ForwardState::new(&src), &x, &[0.0; 2], &mut a).unwrap();
        forward_frozen_batch(&exp, &ForwardState::new(&exp), &x, &[0.0; 3], &mut b).unwrap();
        assert!(a.iter().zip(&b).any(|(p, q)| (p - q).abs() > 1e-3));
        assert_eq!(predict(&a), predict(&b));
    }

    /// Zero-mean weight rows and no biases: no label is favoured.
    fn unbiased(seed: u64) -> Network {
        let arch = Architecture::mnist(&[100, 100]);
        let mut net = init_weights(&arch, CrossMap::empty(100), &mut SeedTree::new(seed).rng(Stage::Init, &[])).unwrap();
        net.layers.iter_mut().for_each(|l| l.bias.iter_mut().for_each(|b| *b = 0.0));
        net
    }

    #[test]
    fn self_agreement_and_chance_level() {
        let a = unbiased(5);
        let b = unbiased(6);
        let x = inputs(7, 10_000, 784);
        assert_eq!(decision_agreement(&a, &a, &x).unwrap(), 1.0);
        let chance = decision_agreement(&a, &b, &x).unwrap();
        assert!((chance - 0.1).abs() < 0.05, "{chance}");
    }

    #[test]
    fn crosses_are_carried_over() {
        let arch = Architecture { n_inputs: 20, n_crosses: 6, hidden: vec![8, 7], n_outputs: 10 };
        let pairs: Vec<Vec<(u16, u16)>> = (0..8).map(|j| (0..6).map(|c| ((j + c) as u16 % 20, (j * 3 + c + 1) as u16 % 20)).collect()).collect();
        let mut rng = SeedTree::new(8).rng(Stage::Init, &[]);
        let src = init_weights(&arch, CrossMap::from_pairs(&pairs), &mut rng).unwrap();
        let exp = expand_two_to_three(&src).unwrap();
        assert_eq!(exp.cross_weights, src.cross_weights);
        assert_eq!(exp.architecture().hidden, vec![8, 7, 100]);
        assert_eq!(decision_agreement(&src, &exp, &inputs(9, 500, 20)).unwrap(), 1.0);
    }

    #[test]
    fn wrong_shapes_rejected() {
        let arch = Architecture::mnist(&[10]);
        let net = init_weights(&arch, CrossMap::empty(10), &mut SeedTree::new(1).rng(Stage::Init, &[])).unwrap();
        assert!(matches!(expand_two_to_three(&net), Err(EquivalenceError::SourceShape { .. })));
        let other = source(1, 50);
        assert_eq!(decision_agreement(&net, &other, &[]), Err(EquivalenceError::InputMismatch(784, 50)));
    }
}
