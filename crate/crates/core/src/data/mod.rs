//! Dataset handling: IDX parsing, balanced sampling, per-example
//! normalization, zero-variance masking, input-cross wiring and
//! label-ordered schedules.

mod crosses;
pub mod idx;
mod preprocess;
mod schedule;

use rand::seq::index;
use rand::Rng;

pub use crosses::{admissible_pair_count, generate_crosses, CrossMap};
pub use idx::{load_mnist, parse_idx, IdxError, IdxFragment, IdxKind, Split};
pub use preprocess::{
    normalize_example, normalize_example_with, write_csv, zero_variance_mask, PreparedSet,
    StdConvention, TrainingSet, ZeroVarianceMask,
};
pub use schedule::{label_ordered_schedule, LabelOrder, Schedule};

pub const IMAGE_SIDE: usize = 28;
/// Base input components per example.
pub const PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const N_LABELS: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error("label {label} has {available} examples, {requested} requested")]
    InsufficientExamples { label: u8, available: usize, requested: usize },
    #[error("operation needs a non-empty training set")]
    EmptySet,
    #[error("set is not balanced: label {label} has {count} examples, expected {expected}")]
    Unbalanced { label: u8, count: usize, expected: usize },
    #[error("requested {requested} crosses per unit but only {available} admissible pairs exist")]
    PoolExhausted { requested: usize, available: usize },
    #[error("label order must be a permutation of 0..=9, got {0:?}")]
    InvalidLabelOrder(Vec<u8>),
    #[error("pixel buffer of {pixels} bytes does not hold {labels} images")]
    LengthMismatch { pixels: usize, labels: usize },
}

/// Raw 8-bit images with labels, stored contiguously.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImageSet {
    pixels: Vec<u8>,
    labels: Vec<u8>,
}

impl RawImageSet {
    pub fn from_parts(pixels: Vec<u8>, labels: Vec<u8>) -> Result<Self, DataError> {
        if pixels.len() != labels.len() * PIXELS {
            return Err(DataError::LengthMismatch { pixels: pixels.len(), labels: labels.len() });
        }
        if let Some((index, &value)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= N_LABELS) {
            return Err(IdxError::LabelOutOfRange { index, value }.into());
        }
        Ok(Self { pixels, labels })
    }

    pub fn empty() -> Self {
        Self { pixels: Vec::new(), labels: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.pixels[i * PIXELS..(i + 1) * PIXELS]
    }

    pub fn images(&self) -> impl ExactSizeIterator<Item = &[u8]> {
        self.pixels.chunks_exact(PIXELS)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label_histogram(&self) -> [usize; N_LABELS] {
        let mut h = [0; N_LABELS];
        for &l in &self.labels {
            h[l as usize] += 1;
        }
        h
    }

    /// Copy of the examples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut pixels = Vec::with_capacity(indices.len() * PIXELS);
        for &i in indices {
            pixels.extend_from_slice(self.image(i));
        }
        Self { pixels, labels: indices.iter().map(|&i| self.labels[i]).collect() }
    }
}

/// Indices of `n_per_label` examples of each label, drawn without
/// replacement. Output is grouped by label in ascending label order.
pub fn balanced_subset_indices<R: Rng + ?Sized>(
    raw: &RawImageSet,
    n_per_label: usize,
    rng: &mut R,
) -> Result<Vec<usize>, DataError> {
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); N_LABELS];
    for (i, &l) in raw.labels.iter().enumerate() {
        by_label[l as usize].push(i);
    }
    if let Some((label, pool)) = by_label.iter().enumerate().find(|(_, p)| p.len() < n_per_label) {
        return Err(DataError::InsufficientExamples {
            label: label as u8,
            available: pool.len(),
            requested: n_per_label,
        });
    }
    let mut out = Vec::with_capacity(N_LABELS * n_per_label);
    for pool in &by_label {
        out.extend(index::sample(rng, pool.len(), n_per_label).into_iter().map(|k| pool[k]));
    }
    Ok(out)
}

pub fn balanced_subset<R: Rng + ?Sized>(
    raw: &RawImageSet,
    n_per_label: usize,
    rng: &mut R,
) -> Result<RawImageSet, DataError> {
    Ok(raw.select(&balanced_subset_indices(raw, n_per_label, rng)?))
}
