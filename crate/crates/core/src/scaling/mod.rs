//! Power laws `eps = c0 * n^(-rho)` fitted to test error against examples
//! per label, by least squares on `(ln n, ln eps)`.

mod plot;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::evalsuite::RunResult;

pub use plot::{svg_plot, PlotSeries};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FitError {
    #[error("need at least 2 distinct dataset sizes, got {0}")]
    TooFewPoints(usize),
    #[error("test error must lie in (0, 1), got {0} at n = {1}")]
    ErrorOutOfRange(f64, f64),
    #[error("dataset size must be positive, got {0}")]
    BadSize(f64),
    #[error("weighted fit needs a positive std at n = {0}")]
    MissingStd(f64),
    #[error("target error {target} is not below c0 = {c0}")]
    TargetNotBelowPrefactor { target: f64, c0: f64 },
    #[error("exponent must be positive, got {0}")]
    NonPositiveExponent(f64),
    #[error("equal exponents: the laws never cross")]
    Parallel,
    #[error("malformed series file: {0}")]
    Format(String),
}

/// One measurement: mean test error at `n` examples per label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalePoint {
    pub n: f64,
    pub error: f64,
    pub std: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScalingSeries {
    pub label: String,
    pub points: Vec<ScalePoint>,
}

pub const SERIES_HEADER: [&str; 4] = ["examples_per_label", "error", "std", "n_samples"];

impl ScalingSeries {
    pub fn new(label: impl Into<String>) -> Self {
        Self { label: label.into(), points: Vec::new() }
    }

    pub fn push(&mut self, n: f64, error: f64, std: f64, n_samples: usize) {
        self.points.push(ScalePoint { n, error, std, n_samples });
    }

    /// From `(n, success rate, std)` rows.
    pub fn from_success_rates(label: impl Into<String>, rows: &[(f64, f64, f64)]) -> Self {
        let mut s = Self::new(label);
        for &(n, rate, std) in rows {
            s.push(n, 1.0 - rate, std, 0);
        }
        s
    }

    /// One point per run.
    pub fn from_results(label: impl Into<String>, results: &[RunResult]) -> Self {
        let mut s = Self::new(label);
        for r in results {
            s.push(r.config.examples_per_label as f64, r.error(), r.std, r.per_sample.len());
        }
        s
    }

    /// Committee errors of runs that have them.
    pub fn committee_from_results(label: impl Into<String>, results: &[RunResult]) -> Self {
        let mut s = Self::new(label);
        for r in results {
            if let Some(c) = &r.committee {
                s.push(r.config.examples_per_label as f64, 1.0 - c.success_rate, c.std, c.per_sample.len());
            }
        }
        s
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(SERIES_HEADER)?;
        for p in &self.points {
            w.write_record([p.n.to_string(), p.error.to_string(), p.std.to_string(), p.n_samples.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(label: impl Into<String>, input: R) -> Result<Self, FitError> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers().map_err(|e| FitError::Format(e.to_string()))?.clone();
        let col = |name: &str| {
            headers.iter().position(|h| h == name).ok_or_else(|| FitError::Format(format!("missing column {name}")))
        };
        let (cn, ce, cs) = (col("examples_per_label")?, col("error")?, col("std")?);
        let cm = col("n_samples").ok();
        let mut s = Self::new(label);
        for rec in r.records() {
            let rec = rec.map_err(|e| FitError::Format(e.to_string()))?;
            let num = |i: usize| -> Result<f64, FitError> {
                rec.get(i).unwrap_or("").trim().parse().map_err(|_| FitError::Format(format!("bad number in row {rec:?}")))
            };
            let m = cm.and_then(|i| rec.get(i)).and_then(|v| v.trim().parse().ok()).unwrap_or(0);
            s.push(num(cn)?, num(ce)?, num(cs)?, m);
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    #[default]
    Ordinary,
    /// Weights `(eps / std)^2`, the inverse variance of `ln eps`.
    InverseVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub c0: f64,
    pub rho: f64,
    /// Coefficient of determination in log-log space.
    pub r2: f64,
    /// Standard error of the slope; 0 with only two points.
    pub se_rho: f64,
    pub n_points: usize,
}

impl PowerLawFit {
    pub fn new(c0: f64, rho: f64) -> Self {
        Self { c0, rho, r2: 1.0, se_rho: 0.0, n_points: 0 }
    }
}

pub fn fit_power_law(series: &ScalingSeries) -> Result<PowerLawFit, FitError> {
    fit_power_law_with(series, FitMode::Ordinary)
}

pub fn fit_power_law_with(series: &ScalingSeries, mode: FitMode) -> Result<PowerLawFit, FitError> {
    let mut xs = Vec::with_capacity(series.points.len());
    let mut ys = Vec::with_capacity(series.points.len());
    let mut ws = Vec::with_capacity(series.points.len());
    for p in &series.points {
        if !(p.n > 0.0 && p.n.is_finite()) {
            return Err(FitError::BadSize(p.n));
        }
        if !(p.error > 0.0 && p.error < 1.0) {
            return Err(FitError::ErrorOutOfRange(p.error, p.n));
        }
        xs.push(p.n.ln());
        ys.push(p.error.ln());
        ws.push(match mode {
            FitMode::Ordinary => 1.0,
            FitMode::InverseVariance if p.std > 0.0 => (p.error / p.std).powi(2),
            FitMode::InverseVariance => return Err(FitError::MissingStd(p.n)),
        });
    }
    let mut distinct = xs.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(FitError::TooFewPoints(distinct.len()));
    }

    let wsum: f64 = ws.iter().sum();
    let xm = xs.iter().zip(&ws).map(|(x, w)| w * x).sum::<f64>() / wsum;
    let ym = ys.iter().zip(&ws).map(|(y, w)| w * y).sum::<f64>() / wsum;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for ((x, y), w) in xs.iter().zip(&ys).zip(&ws) {
        sxx += w * (x - xm) * (x - xm);
        sxy += w * (x - xm) * (y - ym);
        syy += w * (y - ym) * (y - ym);
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ssr: f64 = xs.iter().zip(&ys).zip(&ws).map(|((x, y), w)| w * (y - intercept - slope * x).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 };
    let dof = xs.len() as f64 - 2.0;
    let se_rho = if dof > 0.0 { (ssr / dof / sxx).sqrt() } else { 0.0 };
    Ok(PowerLawFit { c0: intercept.exp(), rho: -slope, r2, se_rho, n_points: xs.len() })
}

/// `c0 * n^(-rho)`.
pub fn extrapolate(fit: &PowerLawFit, n: f64) -> f64 {
    fit.c0 * n.powf(-fit.rho)
}

/// Examples per label at which the law reaches `target`.
pub fn required_dataset_size(fit: &PowerLawFit, target: f64) -> Result<f64, FitError> {
    if fit.rho <= 0.0 {
        return Err(FitError::NonPositiveExponent(fit.rho));
    }
    if !(target > 0.0 && target < fit.c0) {
        return Err(FitError::TargetNotBelowPrefactor { target, c0: fit.c0 });
    }
    Ok((fit.c0 / target).powf(1.0 / fit.rho))
}

/// Dataset size where the two laws intersect.
pub fn crossover(a: &PowerLawFit, b: &PowerLawFit) -> Result<f64, FitError> {
    let dr = b.rho - a.rho;
    if dr == 0.0 {
        return Err(FitError::Parallel);
    }
    Ok(((b.c0.ln() - a.c0.ln()) / dr).exp())
}

/// A crossover with the range obtained by moving single points by one std.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossoverReport {
    pub n_star: f64,
    pub low: f64,
    pub high: f64,
}

/// Crossover of the fits of `a` and `b`, plus its sensitivity: every point
/// of either series is shifted by `+std` and by `-std` in turn, both series
/// refitted, and the extreme crossovers kept.
pub fn crossover_with_sensitivity(
    a: &ScalingSeries,
    b: &ScalingSeries,
    mode: FitMode,
) -> Result<CrossoverReport, FitError> {
    let fa = fit_power_law_with(a, mode)?;
    let fb = fit_power_law_with(b, mode)?;
    let n_star = crossover(&fa, &fb)?;
    let (mut low, mut high) = (n_star, n_star);
    let mut consider = |pa: &ScalingSeries, pb: &ScalingSeries| {
        let cross = fit_power_law_with(pa, mode).and_then(|fa| crossover(&fa, &fit_power_law_with(pb, mode)?));
        if let Ok(n) = cross {
            low = low.min(n);
            high = high.max(n);
        }
    };
    for which in 0..2 {
        let target = if which == 0 { a } else { b };
        for i in 0..target.points.len() {
            for sign in [-1.0, 1.0] {
                let mut moved = target.clone();
                moved.points[i].error += sign * moved.points[i].std;
                if which == 0 {
                    consider(&moved, b);
                } else {
                    consider(a, &moved);
                }
            }
        }
    }
    Ok(CrossoverReport { n_star, low, high })
}

/// Fit summary with extrapolations, as written by `fit` reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub label: String,
    pub fit: PowerLawFit,
    /// `(n, extrapolated error)`.
    pub extrapolations: Vec<(f64, f64)>,
    /// `(target error, required n)`.
    pub required: Vec<(f64, f64)>,
}

impl FitReport {
    pub fn new(series: &ScalingSeries, mode: FitMode, at: &[f64], targets: &[f64]) -> Result<Self, FitError> {
        let fit = fit_power_law_with(series, mode)?;
        let extrapolations = at.iter().map(|&n| (n, extrapolate(&fit, n))).collect();
        let required = targets
            .iter()
            .filter_map(|&t| required_dataset_size(&fit, t).ok().map(|n| (t, n)))
            .collect();
        Ok(Self { label: series.label.clone(), fit, extrapolations, required })
    }
}

/// Long-format CSV: `series, quantity, at, value`, where quantity is one of
/// `c0`, `rho`, `r2`, `se_rho`, `error_at` (at = n) or `size_for_error` (at = error).
pub fn write_fit_reports<W: Write>(reports: &[FitReport], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["series", "quantity", "at", "value"])?;
    for r in reports {
        let f = &r.fit;
        for (q, v) in [("c0", f.c0), ("rho", f.rho), ("r2", f.r2), ("se_rho", f.se_rho)] {
            w.write_record([r.label.as_str(), q, "", &v.to_string()])?;
        }
        for (n, e) in &r.extrapolations {
            w.write_record([r.label.as_str(), "error_at", &n.to_string(), &e.to_string()])?;
        }
        for (t, n) in &r.required {
            w.write_record([r.label.as_str(), "size_for_error", &t.to_string(), &n.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
