//! Input-cross wiring for the first hidden layer.
//!
//! A cross is the product `X_k * X_l` of two distinct normalized pixels.
//! Every first-layer unit receives the same number of crosses, drawn
//! independently per unit; a pair never repeats within one unit, and a pair
//! whose product vanishes on every training example is never used.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, PreparedSet, PIXELS};

/// Per-unit lists of pixel pairs, stored flat: unit `j` owns entries
/// `j * per_unit .. (j + 1) * per_unit`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossMap {
    n_units: usize,
    per_unit: usize,
    first: Vec<u16>,
    second: Vec<u16>,
}

impl CrossMap {
    pub fn empty(n_units: usize) -> Self {
        Self { n_units, per_unit: 0, first: Vec::new(), second: Vec::new() }
    }

    /// Build from explicit `(k, l)` lists, one per unit. All lists must have
    /// equal length and contain only distinct in-range pixels.
    pub fn from_pairs(pairs: &[Vec<(u16, u16)>]) -> Self {
        let per_unit = pairs.first().map_or(0, Vec::len);
        let mut first = Vec::with_capacity(pairs.len() * per_unit);
        let mut second = Vec::with_capacity(pairs.len() * per_unit);
        for unit in pairs {
            assert_eq!(unit.len(), per_unit, "cross map must be microcanonical");
            for &(k, l) in unit {
                assert!(k != l && (k as usize) < PIXELS && (l as usize) < PIXELS);
                first.push(k);
                second.push(l);
            }
        }
        Self { n_units: pairs.len(), per_unit, first, second }
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn per_unit(&self) -> usize {
        self.per_unit
    }

    pub fn is_empty(&self) -> bool {
        self.per_unit == 0
    }

    /// `(first, second)` pixel indices for unit `j`.
    pub fn unit(&self, j: usize) -> (&[u16], &[u16]) {
        let r = j * self.per_unit..(j + 1) * self.per_unit;
        (&self.first[r.clone()], &self.second[r])
    }

    pub fn pairs(&self, j: usize) -> impl Iterator<Item = (u16, u16)> + '_ {
        let (a, b) = self.unit(j);
        a.iter().copied().zip(b.iter().copied())
    }

    /// Cross values of unit `j` for a prepared input `x`.
    pub fn values(&self, j: usize, x: &[f64]) -> Vec<f64> {
        self.pairs(j).map(|(k, l)| x[k as usize] * x[l as usize]).collect()
    }
}

/// Bitsets recording, per pixel, which training examples are nonzero there.
struct Support {
    words: usize,
    bits: Vec<u64>,
    live: Vec<bool>,
}

impl Support {
    fn new(train: &PreparedSet) -> Self {
        let words = train.len().div_ceil(64);
        let mut bits = vec![0u64; PIXELS * words];
        for (m, x) in train.inputs().enumerate() {
            for (p, &v) in x.iter().enumerate() {
                if v != 0.0 {
                    bits[p * words + m / 64] |= 1 << (m % 64);
                }
            }
        }
        let live = (0..PIXELS).map(|p| bits[p * words..(p + 1) * words].iter().any(|&w| w != 0)).collect();
        Self { words, bits, live }
    }

    fn admissible(&self, k: usize, l: usize) -> bool {
        if k == l || !self.live[k] || !self.live[l] {
            return false;
        }
        let a = &self.bits[k * self.words..(k + 1) * self.words];
        let b = &self.bits[l * self.words..(l + 1) * self.words];
        a.iter().zip(b).any(|(x, y)| x & y != 0)
    }

    fn admissible_pairs(&self) -> Vec<(u16, u16)> {
        let mut out = Vec::new();
        for k in 0..PIXELS {
            if !self.live[k] {
                continue;
            }
            for l in k + 1..PIXELS {
                if self.admissible(k, l) {
                    out.push((k as u16, l as u16));
                }
            }
        }
        out
    }
}

/// Number of unordered pixel pairs usable as crosses on `train`.
pub fn admissible_pair_count(train: &PreparedSet) -> usize {
    Support::new(train).admissible_pairs().len()
}

/// Draw `n_crosses` distinct admissible pairs for each of `n_hidden` units.
pub fn generate_crosses<R: Rng + ?Sized>(
    rng: &mut R,
    n_crosses: usize,
    n_hidden: usize,
    train: &PreparedSet,
) -> Result<CrossMap, DataError> {
    if n_crosses == 0 {
        return Ok(CrossMap::empty(n_hidden));
    }
    if train.is_empty() {
        return Err(DataError::EmptySet);
    }
    let support = Support::new(train);
    let pool = support.admissible_pairs();
    if n_crosses > pool.len() {
        return Err(DataError::PoolExhausted { requested: n_crosses, available: pool.len() });
    }

    let mut first = Vec::with_capacity(n_hidden * n_crosses);
    let mut second = Vec::with_capacity(n_hidden * n_crosses);
    // Rejection sampling stays cheap while the unit uses a small part of
    // the pool; beyond half of it, sample the enumerated pool directly.
    let dense = 2 * n_crosses > pool.len();
    let mut used = vec![0u64; (PIXELS * PIXELS).div_ceil(64)];
    let mut used_keys = Vec::with_capacity(n_crosses);
    for _ in 0..n_hidden {
        if dense {
            for i in index::sample(rng, pool.len(), n_crosses) {
                first.push(pool[i].0);
                second.push(pool[i].1);
            }
            continue;
        }
        while used_keys.len() < n_crosses {
            let k = rng.random_range(0..PIXELS);
            let l = rng.random_range(0..PIXELS);
            if !support.admissible(k, l) {
                continue;
            }
            let key = k.min(l) * PIXELS + k.max(l);
            if used[key / 64] & (1 << (key % 64)) != 0 {
                continue;
            }
            used[key / 64] |= 1 << (key % 64);
            used_keys.push(key);
            first.push(k as u16);
            second.push(l as u16);
        }
        for key in used_keys.drain(..) {
            used[key / 64] &= !(1 << (key % 64));
        }
    }
    Ok(CrossMap { n_units: n_hidden, per_unit: n_crosses, first, second })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::testutil::synthetic_set;
    use crate::rng::{SeedTree, Stage};
    use std::collections::HashSet;

    fn train_set() -> PreparedSet {
        PreparedSet::training(&synthetic_set(2, 21)).unwrap()
    }

    /// Exhaustive check, independent of the bitset shortcut.
    fn assert_valid(map: &CrossMap, train: &PreparedSet, n: usize) {
        for j in 0..map.n_units() {
            let mut seen = HashSet::new();
            let pairs: Vec<_> = map.pairs(j).collect();
            assert_eq!(pairs.len(), n);
            for (k, l) in pairs {
                assert_ne!(k, l);
                assert!(seen.insert((k.min(l), k.max(l))), "duplicate pair in unit {j}");
                let nonzero = train.inputs().any(|x| x[k as usize] * x[l as usize] != 0.0);
                assert!(nonzero, "pair ({k},{l}) is zero on every example");
            }
        }
    }

    #[test]
    fn sparse_draw_is_valid() {
        let train = train_set();
        let mut rng = SeedTree::new(1).rng(Stage::Crosses, &[]);
        let map = generate_crosses(&mut rng, 300, 7, &train).unwrap();
        assert_eq!(map.n_units(), 7);
        assert_valid(&map, &train, 300);
    }

    #[test]
    fn dense_draw_is_valid() {
        // Keep only a handful of live pixels so the pool is tiny.
        let raw = synthetic_set(1, 5);
        let mut train = PreparedSet::training(&raw).unwrap();
        let mut keep = vec![true; PIXELS];
        let live: Vec<usize> = (0..PIXELS).filter(|&p| !train.mask().is_masked(p)).collect();
        for &p in &live[12..] {
            keep[p] = false;
        }
        let flags = keep.iter().map(|k| !k).collect();
        let mask = crate::data::ZeroVarianceMask::from_flags(flags);
        let mut inputs: Vec<f64> = train.inputs().flatten().copied().collect();
        for x in inputs.chunks_exact_mut(PIXELS) {
            mask.apply(x);
        }
        train = PreparedSet::from_rows(inputs, train.labels().to_vec(), mask);
        let pool = admissible_pair_count(&train);
        assert!(pool > 0 && pool <= 66);
        let mut rng = SeedTree::new(2).rng(Stage::Crosses, &[]);
        let map = generate_crosses(&mut rng, pool, 3, &train).unwrap();
        assert_valid(&map, &train, pool);
        let err = generate_crosses(&mut rng, pool + 1, 3, &train).unwrap_err();
        assert!(matches!(err, DataError::PoolExhausted { available, .. } if available == pool));
    }

    #[test]
    fn zero_crosses_is_empty() {
        let train = train_set();
        let mut rng = SeedTree::new(1).rng(Stage::Crosses, &[]);
        let map = generate_crosses(&mut rng, 0, 100, &train).unwrap();
        assert!(map.is_empty());
        assert_eq!(map.unit(5).0.len(), 0);
    }

    #[test]
    fn deterministic_and_values_recomputable() {
        let train = train_set();
        let draw = |s| generate_crosses(&mut SeedTree::new(s).rng(Stage::Crosses, &[]), 50, 4, &train).unwrap();
        assert_eq!(draw(8), draw(8));
        assert_ne!(draw(8), draw(9));
        let map = draw(8);
        let x = train.input(3);
        for (v, (k, l)) in map.values(2, x).into_iter().zip(map.pairs(2)) {
            assert_eq!(v, x[k as usize] * x[l as usize]);
        }
    }
}
