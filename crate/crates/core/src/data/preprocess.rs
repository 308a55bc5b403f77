//! Per-example normalization and zero-variance masking.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{DataError, RawImageSet, N_LABELS, PIXELS};

/// Divisor used for the per-example standard deviation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdConvention {
    /// Divide by N.
    #[default]
    Population,
    /// Divide by N - 1.
    Sample,
}

/// `(x - mean(x)) / std(x)`; a constant example maps to all zeros.
pub fn normalize_example(raw: &[u8]) -> Vec<f64> {
    normalize_example_with(raw, StdConvention::Population)
}

pub fn normalize_example_with(raw: &[u8], convention: StdConvention) -> Vec<f64> {
    let n = raw.len() as f64;
    let mean = raw.iter().map(|&v| v as f64).sum::<f64>() / n;
    let ss: f64 = raw.iter().map(|&v| (v as f64 - mean).powi(2)).sum();
    let denom = match convention {
        StdConvention::Population => n,
        StdConvention::Sample => n - 1.0,
    };
    let std = (ss / denom).sqrt();
    if std == 0.0 || !std.is_finite() {
        return vec![0.0; raw.len()];
    }
    raw.iter().map(|&v| (v as f64 - mean) / std).collect()
}

/// Input positions whose raw pixel value is identical across the whole
/// training set. Those positions are forced to zero in every prepared input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroVarianceMask {
    masked: Vec<bool>,
}

impl ZeroVarianceMask {
    pub fn none() -> Self {
        Self { masked: vec![false; PIXELS] }
    }

    pub fn from_flags(masked: Vec<bool>) -> Self {
        assert_eq!(masked.len(), PIXELS);
        Self { masked }
    }

    pub fn is_masked(&self, p: usize) -> bool {
        self.masked[p]
    }

    pub fn count(&self) -> usize {
        self.masked.iter().filter(|&&m| m).count()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.masked
    }

    pub fn apply(&self, x: &mut [f64]) {
        for (v, &m) in x.iter_mut().zip(&self.masked) {
            if m {
                *v = 0.0;
            }
        }
    }
}

/// Mask computed from the raw training images (per-column `min == max`).
pub fn zero_variance_mask(train: &RawImageSet) -> Result<ZeroVarianceMask, DataError> {
    let mut images = train.images();
    let first = images.next().ok_or(DataError::EmptySet)?;
    let mut masked = vec![true; PIXELS];
    for img in images {
        for ((m, &a), &b) in masked.iter_mut().zip(first).zip(img) {
            *m &= a == b;
        }
    }
    Ok(ZeroVarianceMask { masked })
}

/// Normalized, masked inputs ready for the network.
///
/// The same type carries both the training subset and the test set; only
/// the training set has `per_label_count`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSet {
    inputs: Vec<f64>,
    labels: Vec<u8>,
    mask: ZeroVarianceMask,
    per_label_count: Option<usize>,
}

/// A prepared set built from a balanced training subset.
pub type TrainingSet = PreparedSet;

impl PreparedSet {
    /// Normalize every example of `raw` and zero the masked positions.
    pub fn prepare(raw: &RawImageSet, mask: &ZeroVarianceMask) -> Self {
        Self::prepare_with(raw, mask, StdConvention::Population)
    }

    pub fn prepare_with(raw: &RawImageSet, mask: &ZeroVarianceMask, convention: StdConvention) -> Self {
        let mut inputs = Vec::with_capacity(raw.len() * PIXELS);
        for img in raw.images() {
            let mut x = normalize_example_with(img, convention);
            mask.apply(&mut x);
            inputs.extend_from_slice(&x);
        }
        let hist = raw.label_histogram();
        let balanced = !raw.is_empty() && hist.iter().all(|&c| c == hist[0]);
        Self {
            inputs,
            labels: raw.labels().to_vec(),
            mask: mask.clone(),
            per_label_count: balanced.then_some(hist[0]),
        }
    }

    /// Derive the mask from `raw` itself, then prepare it.
    pub fn training(raw: &RawImageSet) -> Result<Self, DataError> {
        let mask = zero_variance_mask(raw)?;
        Ok(Self::prepare(raw, &mask))
    }

    /// Build directly from already-prepared rows (`inputs.len() == labels.len() * PIXELS`).
    pub fn from_rows(inputs: Vec<f64>, labels: Vec<u8>, mask: ZeroVarianceMask) -> Self {
        assert_eq!(inputs.len(), labels.len() * PIXELS);
        let mut hist = [0usize; N_LABELS];
        for &l in &labels {
            hist[l as usize] += 1;
        }
        let balanced = !labels.is_empty() && hist.iter().all(|&c| c == hist[0]);
        Self { inputs, labels, mask, per_label_count: balanced.then_some(hist[0]) }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * PIXELS..(i + 1) * PIXELS]
    }

    pub fn inputs(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.inputs.chunks_exact(PIXELS)
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// One-hot target for example `i`.
    pub fn target(&self, i: usize) -> [f64; N_LABELS] {
        let mut y = [0.0; N_LABELS];
        y[self.labels[i] as usize] = 1.0;
        y
    }

    pub fn mask(&self) -> &ZeroVarianceMask {
        &self.mask
    }

    pub fn per_label_count(&self) -> Option<usize> {
        self.per_label_count
    }

    /// Copy of the examples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut inputs = Vec::with_capacity(indices.len() * PIXELS);
        for &i in indices {
            inputs.extend_from_slice(self.input(i));
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::from_rows(inputs, labels, self.mask.clone())
    }
}

/// One row per example: `p0..p783` then `label`. Values use the shortest
/// representation that round-trips to the same `f64`.
pub fn write_csv<W: Write>(set: &PreparedSet, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (0..PIXELS).map(|p| format!("p{p}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(PIXELS + 1);
    for i in 0..set.len() {
        row.clear();
        row.extend(set.input(i).iter().map(|v| v.to_string()));
        row.push(set.label(i).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::testutil::synthetic_set;

    fn moments(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        (m, (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt())
    }

    #[test]
    fn standardized_input_is_fixed_point() {
        // Two-level image: 392 pixels at 0 and 392 at 2 -> mean 1, std 1.
        let raw: Vec<u8> = (0..PIXELS).map(|p| if p % 2 == 0 { 0 } else { 2 }).collect();
        let once = normalize_example(&raw);
        let (m, s) = moments(&once);
        assert!(m.abs() < 1e-12 && (s - 1.0).abs() < 1e-12);
        for (p, v) in once.iter().enumerate() {
            let expected = if p % 2 == 0 { -1.0 } else { 1.0 };
            assert!((v - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_image_maps_to_zero() {
        assert_eq!(normalize_example(&[128u8; PIXELS]), vec![0.0; PIXELS]);
        assert_eq!(normalize_example_with(&[0u8; PIXELS], StdConvention::Sample), vec![0.0; PIXELS]);
    }

    #[test]
    fn sample_convention_scales_by_bessel() {
        let raw: Vec<u8> = (0..PIXELS).map(|p| (p % 7) as u8 * 30).collect();
        let pop = normalize_example(&raw);
        let samp = normalize_example_with(&raw, StdConvention::Sample);
        let k = ((PIXELS as f64 - 1.0) / PIXELS as f64).sqrt();
        for (a, b) in pop.iter().zip(&samp) {
            assert!((a * k - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mask_edge_cases() {
        let single = synthetic_set(1, 2).select(&[0]);
        assert_eq!(zero_variance_mask(&single).unwrap().count(), PIXELS);
        assert!(matches!(zero_variance_mask(&RawImageSet::empty()), Err(DataError::EmptySet)));

        let pixels: Vec<u8> = (0..2 * PIXELS).map(|i| if i < PIXELS { 0 } else { 1 }).collect();
        let varying = RawImageSet::from_parts(pixels, vec![0, 1]).unwrap();
        assert_eq!(zero_variance_mask(&varying).unwrap().count(), 0);
    }

    #[test]
    fn prepared_training_set_invariants() {
        let raw = synthetic_set(5, 9);
        let set = PreparedSet::training(&raw).unwrap();
        assert_eq!(set.per_label_count(), Some(5));
        // the synthetic border is blank everywhere
        assert!(set.mask().is_masked(0));
        for (i, x) in set.inputs().enumerate() {
            for p in 0..PIXELS {
                if set.mask().is_masked(p) {
                    assert_eq!(x[p], 0.0);
                }
            }
            // Moments are those of the unmasked normalization.
            let (m, s) = moments(&normalize_example(raw.image(i)));
            assert!(m.abs() < 1e-9 && (s - 1.0).abs() < 1e-9);
            assert_eq!(set.target(i).iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn csv_layout() {
        let raw = synthetic_set(1, 4);
        let set = PreparedSet::training(&raw).unwrap();
        let mut buf = Vec::new();
        write_csv(&set, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 11);
        assert!(lines[0].starts_with("p0,p1,") && lines[0].ends_with(",p783,label"));
        let row: Vec<&str> = lines[3].split(',').collect();
        assert_eq!(row.len(), PIXELS + 1);
        assert_eq!(row[PIXELS], "2");
        let back: Vec<f64> = row[..PIXELS].iter().map(|v| v.parse().unwrap()).collect();
        assert_eq!(back.as_slice(), set.input(2));
    }
}
