use serde::{Deserialize, Serialize};

use super::{Evaluation, GridError, Objective, ParamSpace};
use crate::evalsuite::{run_experiment, ExperimentConfig, ExperimentData, RunOptions};
use crate::rng::{SeedTree, Stage};

/// Set one named hyperparameter. Per-layer names carry a 1-based layer
/// suffix: `amp2`, `a1`, `beta3`.
pub fn apply_param(cfg: &mut ExperimentConfig, name: &str, value: f64) -> Result<(), GridError> {
    let h = &mut cfg.hyper;
    let unknown = || GridError::UnknownParameter(name.to_string());
    let layer = |prefix: &str| -> Option<usize> {
        name.strip_prefix(prefix)?.parse::<usize>().ok().filter(|&d| d >= 1).map(|d| d - 1)
    };
    let slot = |v: &mut Vec<f64>, d: usize| -> Result<(), GridError> {
        *v.get_mut(d).ok_or_else(unknown)? = value;
        Ok(())
    };
    match name {
        "eta" => h.eta = value,
        "mu" => h.mu = value,
        "alpha" => h.alpha = value,
        "tau" => h.tau = value,
        "epochs" => h.epochs = value.round().max(1.0) as usize,
        _ => {
            if let Some(d) = layer("amp") {
                slot(&mut h.field_amplitude, d)?;
            } else if let Some(d) = layer("beta") {
                slot(&mut h.step_gain, d)?;
            } else if let Some(d) = layer("a") {
                slot(&mut h.step_amplitude, d)?;
            } else {
                return Err(unknown());
            }
        }
    }
    Ok(())
}

/// Mean test error of an experiment, as a function of named hyperparameters.
///
/// Every point runs with the same seed, taken from the search stream of
/// the base config's seed, so grid points are compared on identical
/// subsets and reported evaluations (which use the base seed directly)
/// never share randomness with the search.
pub struct ExperimentObjective<'a> {
    pub base: ExperimentConfig,
    pub names: Vec<String>,
    pub data: &'a ExperimentData,
    /// Minimize the committee error instead of the single-network error.
    pub committee: bool,
    pub workers: usize,
}

impl<'a> ExperimentObjective<'a> {
    pub fn new(base: ExperimentConfig, space: &ParamSpace, data: &'a ExperimentData) -> Result<Self, GridError> {
        let names: Vec<String> = space.axes.iter().map(|a| a.name.clone()).collect();
        let mut probe = base.clone();
        for n in &names {
            apply_param(&mut probe, n, 0.0)?;
        }
        Ok(Self { base, names, data, committee: false, workers: 1 })
    }

    pub fn search_seed(&self) -> u64 {
        SeedTree::new(self.base.seed).derive(Stage::Search, &[])
    }

    /// Experiment config for one grid point.
    pub fn config_at(&self, point: &[f64]) -> Result<ExperimentConfig, GridError> {
        let mut cfg = self.base.clone();
        cfg.seed = self.search_seed();
        for (n, &v) in self.names.iter().zip(point) {
            apply_param(&mut cfg, n, v)?;
        }
        Ok(cfg)
    }

    pub fn evaluate_point(&self, point: &[f64]) -> Evaluation {
        let cfg = match self.config_at(point) {
            Ok(c) => c,
            Err(e) => {
                log::warn!("point {point:?}: {e}");
                return Evaluation::failed();
            }
        };
        match run_experiment(&cfg, self.data, RunOptions { workers: self.workers }) {
            Ok(r) if r.failures.is_empty() => {
                let (rate, std) = match (&r.committee, self.committee) {
                    (Some(c), true) => (c.success_rate, c.std),
                    _ => (r.success_rate, r.std),
                };
                log::info!("point {point:?}: error {:.4} +- {std:.4}", 1.0 - rate);
                Evaluation { mean_error: 1.0 - rate, std, n_samples: r.n_samples }
            }
            Ok(r) => {
                log::warn!("point {point:?}: {} diverged replicas", r.failures.len());
                Evaluation::failed()
            }
            Err(e) => {
                log::warn!("point {point:?}: {e}");
                Evaluation::failed()
            }
        }
    }
}

impl Objective for ExperimentObjective<'_> {
    fn evaluate(&self, point: &[f64]) -> Evaluation {
        self.evaluate_point(point)
    }
}

/// Everything needed to replay a search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchManifest {
    pub base: ExperimentConfig,
    pub space: ParamSpace,
    /// Axis indices for coordinate search; empty for a joint grid search.
    pub order: Vec<usize>,
    pub stages: usize,
    pub max_sweeps: usize,
    pub committee: bool,
    pub search_seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::testutil::synthetic_set;
    use crate::evalsuite::mean_and_std;
    use crate::gridopt::{staged_grid_search, EvalCache, ParamAxis};
    use crate::network::Architecture;
    use crate::optim::{HyperParams, Strategy};

    fn base() -> ExperimentConfig {
        ExperimentConfig {
            architecture: Architecture::mnist(&[20]),
            strategy: Strategy::Momentum,
            hyper: HyperParams::momentum(0.01, 0.5, 0.0, vec![0.1], 1),
            examples_per_label: 3,
            n_samples: 3,
            seed: 5,
            committee: None,
            label_order: Default::default(),
            reset_field_each_epoch: false,
        }
    }

    fn data() -> ExperimentData {
        ExperimentData::new(synthetic_set(8, 11), &synthetic_set(4, 12))
    }

    #[test]
    fn names_map_to_fields() {
        let mut cfg = base();
        cfg.architecture = Architecture::mnist(&[20, 10]);
        cfg.hyper.field_amplitude = vec![0.1, 0.2];
        apply_param(&mut cfg, "eta", 0.3).unwrap();
        apply_param(&mut cfg, "amp2", 0.7).unwrap();
        apply_param(&mut cfg, "epochs", 2.6).unwrap();
        assert_eq!((cfg.hyper.eta, cfg.hyper.field_amplitude[1], cfg.hyper.epochs), (0.3, 0.7, 3));
        assert_eq!(apply_param(&mut cfg, "amp3", 1.0), Err(GridError::UnknownParameter("amp3".into())));
        assert!(apply_param(&mut cfg, "gamma", 1.0).is_err());
    }

    #[test]
    fn evaluate_point_matches_run_and_is_deterministic() {
        let data = data();
        let space = ParamSpace::new(vec![ParamAxis::new("eta", 0.0, 0.1, 0.01)]);
        let obj = ExperimentObjective::new(base(), &space, &data).unwrap();
        let e = obj.evaluate_point(&[0.02]);
        assert_eq!(e, obj.evaluate_point(&[0.02]));
        let run = run_experiment(&obj.config_at(&[0.02]).unwrap(), &data, RunOptions::default()).unwrap();
        assert_eq!(run.per_sample.len(), 3);
        let (m, s) = mean_and_std(&run.per_sample);
        assert_eq!((e.mean_error, e.std, e.n_samples), (1.0 - m, s, 3));
        assert_ne!(obj.config_at(&[0.02]).unwrap().seed, base().seed);
    }

    #[test]
    fn divergence_is_infinite_error() {
        let data = data();
        let space = ParamSpace::new(vec![ParamAxis::new("eta", 0.0, 1e300, 1e300)]);
        let mut b = base();
        b.hyper.mu = 1.0;
        b.n_samples = 1;
        let obj = ExperimentObjective::new(b, &space, &data).unwrap();
        let t = staged_grid_search(&space, &obj, 1, &EvalCache::new()).unwrap();
        assert_eq!(t.entries.len(), 2);
        assert!(t.entries[1].eval.mean_error.is_infinite());
        assert!(t.entries[0].eval.mean_error.is_finite());
    }
}
