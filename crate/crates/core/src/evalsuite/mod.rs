//! Test error, soft committees, and multi-sample experiments.

mod experiment;

use crate::data::{PreparedSet, ZeroVarianceMask, N_LABELS};
use crate::network::{forward_frozen_batch, predict, ForwardState, Network, NetworkError};

pub use experiment::{
    config_hash, mean_and_std, run_experiment, run_sample, train_replica, write_results_csv, CommitteeConfig, CommitteeResult,
    ExperimentConfig, ExperimentData, ExperimentError, Failure, RunOptions, RunResult, SampleOutcome, TrainedReplica, CSV_HEADER,
};

/// Network outputs for every example of `test`, row-major `len x 10`.
///
/// The accumulators are only read. When `mask` is given, masked positions
/// are zeroed before each pass, which lets one normalized copy of the test
/// set serve every training subset.
pub fn test_outputs(
    net: &Network,
    state: &ForwardState,
    test: &PreparedSet,
    mask: Option<&ZeroVarianceMask>,
    amps: &[f64],
) -> Result<Vec<f64>, NetworkError> {
    let mut out = Vec::with_capacity(test.len() * N_LABELS);
    let mut block = Vec::new();
    let rows: Vec<&[f64]> = test.inputs().collect();
    for chunk in rows.chunks(256) {
        block.clear();
        for x in chunk {
            let start = block.len();
            block.extend_from_slice(x);
            if let Some(m) = mask {
                m.apply(&mut block[start..]);
            }
        }
        forward_frozen_batch(net, state, &block, amps, &mut out)?;
    }
    Ok(out)
}

/// Fraction of `labels` that disagree with the argmax of each output row.
pub fn error_rate(outputs: &[f64], labels: &[u8]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let wrong = outputs.chunks_exact(N_LABELS).zip(labels).filter(|(o, &l)| predict(o) != l as usize).count();
    wrong as f64 / labels.len() as f64
}

/// Test error of one trained network, forward passes in frozen mode.
pub fn test_error(net: &Network, state: &ForwardState, test: &PreparedSet, amps: &[f64]) -> Result<f64, NetworkError> {
    Ok(error_rate(&test_outputs(net, state, test, None, amps)?, test.labels()))
}

/// Committee label for one example: argmax of the summed replica outputs.
pub fn soft_committee_predict(outputs: &[&[f64]]) -> usize {
    let mut sum = [0.0; N_LABELS];
    for o in outputs {
        for (s, v) in sum.iter_mut().zip(o.iter()) {
            *s += v;
        }
    }
    predict(&sum)
}

/// Running per-example sums of replica outputs over a whole test set.
#[derive(Debug, Clone, PartialEq)]
pub struct CommitteeSums {
    sums: Vec<f64>,
    members: usize,
}

impl CommitteeSums {
    pub fn new(n_examples: usize) -> Self {
        Self { sums: vec![0.0; n_examples * N_LABELS], members: 0 }
    }

    pub fn add(&mut self, outputs: &[f64]) {
        assert_eq!(outputs.len(), self.sums.len());
        self.sums.iter_mut().zip(outputs).for_each(|(s, o)| *s += o);
        self.members += 1;
    }

    pub fn members(&self) -> usize {
        self.members
    }

    pub fn error_rate(&self, labels: &[u8]) -> f64 {
        error_rate(&self.sums, labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CrossMap;
    use crate::network::{init_weights, Architecture};
    use crate::rng::{SeedTree, Stage};
    use rand::Rng;

    #[test]
    fn committee_hand_sums() {
        let a = [0.9, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let b = [0.0, 0.6, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let c = [0.0, 0.3, 0.6, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        // sums: label 0 -> 0.9, label 1 -> 1.0, label 2 -> 1.1
        assert_eq!(soft_committee_predict(&[&a, &b, &c]), 2);
        assert_eq!(soft_committee_predict(&[&a, &b]), 0);
        assert_eq!(soft_committee_predict(&[&b, &c]), 2);
        assert_eq!(soft_committee_predict(&[&a]), predict(&a));
    }

    #[test]
    fn committee_ties_go_low() {
        let a = [0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.25];
        let b = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.25];
        assert_eq!(soft_committee_predict(&[&a, &b]), 0);
    }

    #[test]
    fn committee_order_invariant() {
        let mut rng = SeedTree::new(9).rng(Stage::Auxiliary, &[]);
        for _ in 0..200 {
            let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..10).map(|_| rng.random::<f64>()).collect()).collect();
            let fwd: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
            let rev: Vec<&[f64]> = rows.iter().rev().map(Vec::as_slice).collect();
            assert_eq!(soft_committee_predict(&fwd), soft_committee_predict(&rev));
        }
    }

    #[test]
    fn perfect_outputs_give_zero_error() {
        let labels = [3u8, 1, 4, 1, 5, 9, 2, 6];
        let mut outputs = vec![0.0; labels.len() * 10];
        for (i, &l) in labels.iter().enumerate() {
            outputs[i * 10 + l as usize] = 1.0;
        }
        assert_eq!(error_rate(&outputs, &labels), 0.0);
    }

    #[test]
    fn test_error_permutation_invariant() {
        let raw = crate::data::testutil::synthetic_set(6, 2);
        let test = PreparedSet::training(&raw).unwrap();
        let arch = Architecture::mnist(&[8]);
        let net = init_weights(&arch, CrossMap::empty(8), &mut SeedTree::new(1).rng(Stage::Init, &[])).unwrap();
        let state = ForwardState::new(&net);
        let e = test_error(&net, &state, &test, &[0.2]).unwrap();
        let order: Vec<usize> = (0..test.len()).rev().collect();
        assert_eq!(test_error(&net, &state, &test.select(&order), &[0.2]).unwrap(), e);
    }

    #[test]
    fn committee_sums_track_members() {
        let labels = [0u8, 1];
        let mut c = CommitteeSums::new(2);
        let mut o = vec![0.0; 20];
        o[1] = 1.0;
        o[11] = 1.0;
        c.add(&o);
        assert_eq!(c.error_rate(&labels), 0.5);
        assert_eq!(c.members(), 1);
    }
}
