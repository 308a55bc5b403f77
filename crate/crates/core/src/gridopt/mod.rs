//! Grid refinement and coordinate-wise hyperparameter search.
//!
//! A staged search scans every axis on its coarse grid, then repeatedly
//! re-centers on the incumbent and scans the cell around it at a finer
//! resolution. It stops when a stage improves the best mean error by less
//! than the incumbent's std, or when the stages run out. Coordinate search
//! applies the staged search to one axis at a time, sweeping until a full
//! pass over the axes brings no such improvement.

mod experiment;

use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use experiment::{apply_param, ExperimentObjective, SearchManifest};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GridError {
    #[error("axis {0}: empty or inverted range")]
    EmptyRange(String),
    #[error("axis {0}: resolution must be positive")]
    BadResolution(String),
    #[error("search space has no axes")]
    NoAxes,
    #[error("stages must be at least 1")]
    NoStages,
    #[error("coordinate order must be a permutation of the axes")]
    BadOrder,
    #[error("unknown parameter {0}")]
    UnknownParameter(String),
    #[error("malformed trace: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamAxis {
    pub name: String,
    pub low: f64,
    pub high: f64,
    /// Coarse-stage spacing.
    pub resolution: f64,
    /// Spacing divisor between stages.
    #[serde(default = "default_refine")]
    pub refine: f64,
    /// Explicit spacing per stage; overrides `resolution` and `refine`.
    #[serde(default)]
    pub resolutions: Vec<f64>,
    /// Starting value for coordinate search; defaults to the range midpoint.
    #[serde(default)]
    pub start: Option<f64>,
}

fn default_refine() -> f64 {
    10.0
}

impl ParamAxis {
    pub fn new(name: impl Into<String>, low: f64, high: f64, resolution: f64) -> Self {
        Self { name: name.into(), low, high, resolution, refine: 10.0, resolutions: Vec::new(), start: None }
    }

    pub fn with_resolutions(mut self, resolutions: Vec<f64>) -> Self {
        self.resolutions = resolutions;
        self
    }

    pub fn with_start(mut self, start: f64) -> Self {
        self.start = Some(start);
        self
    }

    /// Grid spacing at `stage` (0-based).
    pub fn resolution_at(&self, stage: usize) -> f64 {
        match self.resolutions.get(stage) {
            Some(&r) => r,
            None if !self.resolutions.is_empty() => {
                let last = *self.resolutions.last().unwrap();
                last / self.refine.powi((stage + 1 - self.resolutions.len()) as i32)
            }
            None => self.resolution / self.refine.powi(stage as i32),
        }
    }

    fn validate(&self) -> Result<(), GridError> {
        if !(self.low <= self.high) || !self.low.is_finite() || !self.high.is_finite() {
            return Err(GridError::EmptyRange(self.name.clone()));
        }
        let positive = |r: f64| r > 0.0 && r.is_finite();
        if !positive(self.resolution) || !positive(self.refine) || !self.resolutions.iter().all(|&r| positive(r)) {
            return Err(GridError::BadResolution(self.name.clone()));
        }
        Ok(())
    }

    /// Values `from, from + r, ...` up to `to`, clipped to the axis range.
    fn grid(&self, from: f64, to: f64, r: f64) -> Vec<f64> {
        let (from, to) = (from.max(self.low), to.min(self.high));
        let steps = ((to - from) / r + 1e-9).floor() as i64;
        let mut v: Vec<f64> = (0..=steps.max(0)).map(|i| tidy(from + i as f64 * r, r)).collect();
        v.dedup();
        v
    }

    fn coarse_grid(&self) -> Vec<f64> {
        self.grid(self.low, self.high, self.resolution_at(0))
    }

    /// The cell of half-width `prev` around `center`, at spacing `r`.
    fn refined_grid(&self, center: f64, prev: f64, r: f64) -> Vec<f64> {
        let k = (prev / r).round() as i64;
        let mut v: Vec<f64> = (-k..=k)
            .map(|i| tidy(center + i as f64 * r, r))
            .filter(|&x| x >= self.low - 1e-12 && x <= self.high + 1e-12)
            .collect();
        v.dedup();
        v
    }
}

/// Round to a few digits below the grid spacing so grid values print and
/// compare cleanly.
fn tidy(x: f64, r: f64) -> f64 {
    let digits = (-r.log10()).ceil().max(0.0) as usize + 3;
    format!("{x:.digits$}").parse().unwrap_or(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub axes: Vec<ParamAxis>,
}

impl ParamSpace {
    pub fn new(axes: Vec<ParamAxis>) -> Self {
        Self { axes }
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.axes.is_empty() {
            return Err(GridError::NoAxes);
        }
        self.axes.iter().try_for_each(ParamAxis::validate)
    }

    pub fn names(&self) -> Vec<&str> {
        self.axes.iter().map(|a| a.name.as_str()).collect()
    }

    pub fn start(&self) -> Vec<f64> {
        self.axes.iter().map(|a| a.start.unwrap_or(tidy((a.low + a.high) / 2.0, a.resolution_at(0)))).collect()
    }
}

/// Result of evaluating one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Mean error; infinite for a failed evaluation.
    pub mean_error: f64,
    pub std: f64,
    pub n_samples: usize,
}

impl Evaluation {
    pub fn failed() -> Self {
        Self { mean_error: f64::INFINITY, std: 0.0, n_samples: 0 }
    }
}

/// Something to minimize. Must be deterministic in `point`.
pub trait Objective: Sync {
    fn evaluate(&self, point: &[f64]) -> Evaluation;
}

impl<F: Fn(&[f64]) -> Evaluation + Sync> Objective for F {
    fn evaluate(&self, point: &[f64]) -> Evaluation {
        self(point)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub sweep: usize,
    /// Axis searched, or `None` for a joint search over all axes.
    pub coordinate: Option<usize>,
    pub stage: usize,
    /// Position within the stage's grid.
    pub index: usize,
    pub params: Vec<f64>,
    pub eval: Evaluation,
    /// Taken from an earlier evaluation of the same point.
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SearchTrace {
    pub names: Vec<String>,
    pub entries: Vec<TraceEntry>,
}

impl SearchTrace {
    fn new(space: &ParamSpace) -> Self {
        Self { names: space.axes.iter().map(|a| a.name.clone()).collect(), entries: Vec::new() }
    }

    /// Entry with the lowest mean error; the earliest wins ties.
    pub fn incumbent(&self) -> Option<&TraceEntry> {
        self.entries.iter().fold(None, |best: Option<&TraceEntry>, e| match best {
            Some(b) if b.eval.mean_error <= e.eval.mean_error => Some(b),
            _ => Some(e),
        })
    }

    /// Number of entries that ran the objective.
    pub fn evaluations(&self) -> usize {
        self.entries.iter().filter(|e| !e.cached).count()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["sweep".to_string(), "coordinate".into(), "stage".into(), "index".into()];
        header.extend(self.names.iter().cloned());
        header.extend(["mean_error", "std", "n_samples", "cached"].map(String::from));
        w.write_record(&header)?;
        for e in &self.entries {
            let mut row = vec![
                e.sweep.to_string(),
                e.coordinate.map_or(String::new(), |c| c.to_string()),
                e.stage.to_string(),
                e.index.to_string(),
            ];
            row.extend(e.params.iter().map(f64::to_string));
            row.extend([e.eval.mean_error.to_string(), e.eval.std.to_string(), e.eval.n_samples.to_string(), e.cached.to_string()]);
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, GridError> {
        let bad = |e: &dyn std::fmt::Display| GridError::Format(e.to_string());
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers().map_err(|e| bad(&e))?.iter().map(String::from).collect();
        if header.len() < 8 {
            return Err(GridError::Format("too few columns".into()));
        }
        let k = header.len() - 8;
        let names = header[4..4 + k].to_vec();
        let mut entries = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| bad(&e))?;
            let f = |i: usize| -> Result<f64, GridError> { rec[i].parse().map_err(|_| GridError::Format(format!("bad number {:?}", &rec[i]))) };
            let u = |i: usize| -> Result<usize, GridError> { rec[i].parse().map_err(|_| GridError::Format(format!("bad integer {:?}", &rec[i]))) };
            entries.push(TraceEntry {
                sweep: u(0)?,
                coordinate: if rec[1].is_empty() { None } else { Some(u(1)?) },
                stage: u(2)?,
                index: u(3)?,
                params: (4..4 + k).map(f).collect::<Result<_, _>>()?,
                eval: Evaluation { mean_error: f(4 + k)?, std: f(5 + k)?, n_samples: u(6 + k)? },
                cached: rec[7 + k].parse().map_err(|_| GridError::Format("bad cached flag".into()))?,
            });
        }
        Ok(Self { names, entries })
    }
}

/// Results already known, keyed by exact parameter bits.
///
/// With a journal, every new result is appended to a file as one line of
/// `params..., mean_error, std, n_samples`, and reopening the journal
/// restores them.
#[derive(Debug, Default)]
pub struct EvalCache {
    known: Mutex<HashMap<Vec<u64>, Evaluation>>,
    journal: Option<Mutex<std::fs::File>>,
}

impl EvalCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Seed the cache with the evaluated entries of an earlier trace.
    pub fn from_trace(trace: &SearchTrace) -> Self {
        let cache = Self::new();
        for e in trace.entries.iter().filter(|e| !e.cached) {
            cache.insert(&e.params, e.eval);
        }
        cache
    }

    /// Cache backed by the journal at `path`. Existing entries are loaded
    /// when `resume` is set; otherwise the file is truncated.
    pub fn open_journal(path: &std::path::Path, resume: bool) -> Result<Self, GridError> {
        let bad = |e: std::io::Error| GridError::Format(format!("{}: {e}", path.display()));
        let known = Mutex::new(HashMap::new());
        if resume && path.exists() {
            let text = std::fs::read_to_string(path).map_err(bad)?;
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let vals: Vec<&str> = line.split(',').collect();
                let parsed: Option<(Vec<f64>, Evaluation)> = (|| {
                    let k = vals.len().checked_sub(3)?;
                    let params = vals[..k].iter().map(|v| v.parse().ok()).collect::<Option<Vec<f64>>>()?;
                    let eval = Evaluation {
                        mean_error: vals[k].parse().ok()?,
                        std: vals[k + 1].parse().ok()?,
                        n_samples: vals[k + 2].parse().ok()?,
                    };
                    Some((params, eval))
                })();
                // a partly written last line is dropped
                match parsed {
                    Some((p, e)) => {
                        known.lock().unwrap().insert(Self::key(&p), e);
                    }
                    None if i + 1 == text.lines().count() => {}
                    None => return Err(GridError::Format(format!("{}: bad line {}", path.display(), i + 1))),
                }
            }
        }
        let file = std::fs::OpenOptions::new().create(true).append(resume).write(true).truncate(!resume).open(path).map_err(bad)?;
        Ok(Self { known, journal: Some(Mutex::new(file)) })
    }

    fn key(p: &[f64]) -> Vec<u64> {
        p.iter().map(|v| v.to_bits()).collect()
    }

    pub fn get(&self, p: &[f64]) -> Option<Evaluation> {
        self.known.lock().unwrap().get(&Self::key(p)).copied()
    }

    pub fn insert(&self, p: &[f64], e: Evaluation) {
        let fresh = self.known.lock().unwrap().insert(Self::key(p), e).is_none();
        if let (true, Some(j)) = (fresh, &self.journal) {
            let mut line: Vec<String> = p.iter().map(f64::to_string).collect();
            line.extend([e.mean_error.to_string(), e.std.to_string(), e.n_samples.to_string()]);
            let mut f = j.lock().unwrap();
            if let Err(err) = writeln!(f, "{}", line.join(",")).and_then(|_| f.flush()) {
                log::warn!("journal write failed: {err}");
            }
        }
    }

    pub fn len(&self) -> usize {
        self.known.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Shared machinery: evaluate a list of points, cached ones first, the
/// rest concurrently, and append them to the trace in grid order.
struct Runner<'a, O: Objective> {
    objective: &'a O,
    cache: &'a EvalCache,
    trace: SearchTrace,
    /// Entries that ran the objective in this invocation.
    fresh: usize,
}

impl<O: Objective> Runner<'_, O> {
    fn run_stage(&mut self, points: Vec<Vec<f64>>, sweep: usize, coordinate: Option<usize>, stage: usize) {
        let known: Vec<Option<Evaluation>> = points.iter().map(|p| self.cache.get(p)).collect();
        let mut todo: Vec<usize> = (0..points.len()).filter(|&i| known[i].is_none()).collect();
        // the same point can appear twice only through clipping; evaluate it once
        todo.dedup_by(|a, b| points[*a] == points[*b]);
        let evaluated: Vec<(usize, Evaluation)> =
            todo.par_iter().map(|&i| (i, self.objective.evaluate(&points[i]))).collect();
        let mut fresh = HashMap::new();
        for (i, e) in evaluated {
            let e = if e.mean_error.is_nan() { Evaluation::failed() } else { e };
            self.cache.insert(&points[i], e);
            fresh.insert(i, e);
        }
        for (index, params) in points.into_iter().enumerate() {
            let (eval, cached) = match fresh.remove(&index) {
                Some(e) => (e, false),
                None => (self.cache.get(&params).expect("evaluated or cached"), true),
            };
            if !cached {
                self.fresh += 1;
            }
            self.trace.entries.push(TraceEntry { sweep, coordinate, stage, index, params, eval, cached });
        }
    }

    fn best(&self) -> Option<TraceEntry> {
        self.trace.incumbent().cloned()
    }
}

fn cartesian(grids: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for g in grids {
        out = out.into_iter().flat_map(|p| g.iter().map(move |&v| [p.clone(), vec![v]].concat())).collect();
    }
    out
}

/// Stage loop over the given axes, all others held at `base`.
fn staged<O: Objective>(
    runner: &mut Runner<'_, O>,
    space: &ParamSpace,
    axes: &[usize],
    base: &[f64],
    stages: usize,
    sweep: usize,
    coordinate: Option<usize>,
) {
    let assemble = |grids: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        cartesian(&grids)
            .into_iter()
            .map(|vals| {
                let mut p = base.to_vec();
                for (&a, v) in axes.iter().zip(vals) {
                    p[a] = v;
                }
                p
            })
            .collect()
    };
    let start = runner.trace.entries.len();
    let stage_best = |r: &Runner<'_, O>| {
        r.trace.entries[start..]
            .iter()
            .fold(None, |b: Option<&TraceEntry>, e| match b {
                Some(b) if b.eval.mean_error <= e.eval.mean_error => Some(b),
                _ => Some(e),
            })
            .cloned()
            .expect("stage has points")
    };
    let coarse: Vec<Vec<f64>> = axes.iter().map(|&a| space.axes[a].coarse_grid()).collect();
    runner.run_stage(assemble(coarse), sweep, coordinate, 0);
    let mut best = stage_best(runner);
    for stage in 1..stages {
        let grids: Vec<Vec<f64>> = axes
            .iter()
            .map(|&a| {
                let ax = &space.axes[a];
                ax.refined_grid(best.params[a], ax.resolution_at(stage - 1), ax.resolution_at(stage))
            })
            .collect();
        runner.run_stage(assemble(grids), sweep, coordinate, stage);
        let next = stage_best(runner);
        let improvement = best.eval.mean_error - next.eval.mean_error;
        let stop = !(improvement >= best.eval.std) || improvement == 0.0;
        if next.eval.mean_error < best.eval.mean_error {
            best = next;
        }
        if stop {
            break;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOptions {
    pub stages: usize,
    /// Upper bound on coordinate sweeps.
    pub max_sweeps: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { stages: 3, max_sweeps: 4 }
    }
}

/// Joint staged grid search over every axis.
pub fn staged_grid_search<O: Objective>(
    space: &ParamSpace,
    objective: &O,
    stages: usize,
    cache: &EvalCache,
) -> Result<SearchTrace, GridError> {
    space.validate()?;
    if stages == 0 {
        return Err(GridError::NoStages);
    }
    let mut runner = Runner { objective, cache, trace: SearchTrace::new(space), fresh: 0 };
    let axes: Vec<usize> = (0..space.axes.len()).collect();
    staged(&mut runner, space, &axes, &space.start(), stages, 0, None);
    log::info!("grid search: {} evaluations, {} cached", runner.fresh, runner.trace.entries.len() - runner.fresh);
    Ok(runner.trace)
}

/// One axis at a time in `order`, each by staged refinement around the
/// current incumbent, until a sweep improves the best error by less than
/// its std.
pub fn sequential_coordinate_search<O: Objective>(
    space: &ParamSpace,
    objective: &O,
    order: &[usize],
    opts: SearchOptions,
    cache: &EvalCache,
) -> Result<SearchTrace, GridError> {
    space.validate()?;
    if opts.stages == 0 {
        return Err(GridError::NoStages);
    }
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != (0..space.axes.len()).collect::<Vec<_>>() {
        return Err(GridError::BadOrder);
    }
    let mut runner = Runner { objective, cache, trace: SearchTrace::new(space), fresh: 0 };
    let mut current = space.start();
    let mut best: Option<TraceEntry> = None;
    for sweep in 0..opts.max_sweeps.max(1) {
        for &a in order {
            staged(&mut runner, space, &[a], &current, opts.stages, sweep, Some(a));
            current = runner.best().expect("trace not empty").params;
        }
        let now = runner.best().expect("trace not empty");
        let improved = match &best {
            None => true,
            Some(b) => b.eval.mean_error - now.eval.mean_error >= b.eval.std && now.eval.mean_error < b.eval.mean_error,
        };
        best = Some(now);
        if !improved {
            break;
        }
    }
    log::info!("coordinate search: {} evaluations, {} cached", runner.fresh, runner.trace.entries.len() - runner.fresh);
    Ok(runner.trace)
}
