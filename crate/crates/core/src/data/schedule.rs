//! Label-ordered presentation schedules.
//!
//! Each epoch presents the balanced set as `n` repetitions of a fixed label
//! cycle. Which concrete example fills a slot is a fresh random choice
//! without replacement every epoch; the induced label sequence never changes.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, N_LABELS};

/// A permutation of the ten labels giving the presentation cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct LabelOrder([u8; N_LABELS]);

impl Default for LabelOrder {
    fn default() -> Self {
        Self([0, 1, 2, 3, 4, 5, 6, 7, 8, 9])
    }
}

impl LabelOrder {
    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }
}

impl TryFrom<Vec<u8>> for LabelOrder {
    type Error = DataError;

    fn try_from(v: Vec<u8>) -> Result<Self, DataError> {
        let mut seen = [false; N_LABELS];
        if v.len() != N_LABELS {
            return Err(DataError::InvalidLabelOrder(v));
        }
        for &l in &v {
            if l as usize >= N_LABELS || std::mem::replace(&mut seen[l as usize], true) {
                return Err(DataError::InvalidLabelOrder(v));
            }
        }
        let mut out = [0; N_LABELS];
        out.copy_from_slice(&v);
        Ok(Self(out))
    }
}

impl From<LabelOrder> for Vec<u8> {
    fn from(o: LabelOrder) -> Vec<u8> {
        o.0.to_vec()
    }
}

/// Example indices for one epoch, in presentation order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule(Vec<usize>);

impl Schedule {
    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Schedule over a set with the given per-example `labels`.
pub fn label_ordered_schedule<R: Rng + ?Sized>(
    labels: &[u8],
    order: &LabelOrder,
    rng: &mut R,
) -> Result<Schedule, DataError> {
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); N_LABELS];
    for (i, &l) in labels.iter().enumerate() {
        groups[l as usize].push(i);
    }
    let n = groups[0].len();
    if let Some((label, g)) = groups.iter().enumerate().find(|(_, g)| g.len() != n) {
        return Err(DataError::Unbalanced { label: label as u8, count: g.len(), expected: n });
    }
    for g in &mut groups {
        g.shuffle(rng);
    }
    let mut out = Vec::with_capacity(labels.len());
    for c in 0..n {
        for &l in order.as_slice() {
            out.push(groups[l as usize][c]);
        }
    }
    Ok(Schedule(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{SeedTree, Stage};

    fn balanced_labels(n: usize) -> Vec<u8> {
        // grouped by label, as produced by balanced sampling
        (0..N_LABELS as u8).flat_map(|l| std::iter::repeat_n(l, n)).collect()
    }

    #[test]
    fn one_per_label() {
        let labels = balanced_labels(1);
        let mut rng = SeedTree::new(0).rng(Stage::Schedule, &[]);
        let s = label_ordered_schedule(&labels, &LabelOrder::default(), &mut rng).unwrap();
        let seq: Vec<u8> = s.indices().iter().map(|&i| labels[i]).collect();
        assert_eq!(seq, (0..10).collect::<Vec<u8>>());
    }

    #[test]
    fn label_cycle_at_thirty_per_label() {
        let labels = balanced_labels(30);
        let mut rng = SeedTree::new(4).rng(Stage::Schedule, &[]);
        let order = LabelOrder::default();
        let a = label_ordered_schedule(&labels, &order, &mut rng).unwrap();
        let b = label_ordered_schedule(&labels, &order, &mut rng).unwrap();
        assert_ne!(a, b, "epochs draw fresh permutations");
        for s in [&a, &b] {
            assert_eq!(s.len(), 300);
            for (pos, &i) in s.indices().iter().enumerate() {
                assert_eq!(labels[i] as usize, pos % 10);
            }
            let mut idx = s.indices().to_vec();
            idx.sort_unstable();
            assert_eq!(idx, (0..300).collect::<Vec<_>>());
        }
    }

    #[test]
    fn custom_order_and_validation() {
        let order = LabelOrder::try_from(vec![9, 8, 7, 6, 5, 4, 3, 2, 1, 0]).unwrap();
        let labels = balanced_labels(2);
        let mut rng = SeedTree::new(1).rng(Stage::Schedule, &[]);
        let s = label_ordered_schedule(&labels, &order, &mut rng).unwrap();
        assert_eq!(labels[s.indices()[0]], 9);
        assert_eq!(labels[s.indices()[19]], 0);
        assert!(LabelOrder::try_from(vec![0, 0, 1, 2, 3, 4, 5, 6, 7, 8]).is_err());
        assert!(LabelOrder::try_from(vec![0, 1]).is_err());
    }

    #[test]
    fn unbalanced_is_rejected() {
        let mut labels = balanced_labels(2);
        labels.push(3);
        let mut rng = SeedTree::new(1).rng(Stage::Schedule, &[]);
        let err = label_ordered_schedule(&labels, &LabelOrder::default(), &mut rng).unwrap_err();
        assert!(matches!(err, DataError::Unbalanced { label: 3, count: 3, expected: 2 }));
    }
}
