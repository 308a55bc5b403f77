use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{error_rate, test_outputs, CommitteeSums};
use crate::data::{
    balanced_subset, generate_crosses, load_mnist, zero_variance_mask, DataError, LabelOrder, PreparedSet,
    RawImageSet, Split, ZeroVarianceMask,
};
use crate::network::{init_weights, Architecture, ForwardState, Network, NetworkError};
use crate::optim::{train, HyperParamError, HyperParams, NumericError, Strategy, TrainConfig, TrainError};
use crate::rng::{SeedTree, Stage};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    HyperParams(#[from] HyperParamError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error("could not start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommitteeConfig {
    /// Replicas per sample.
    pub n_committee: usize,
    /// Reuse replica 0's cross map for every replica.
    #[serde(default)]
    pub share_crosses: bool,
}

impl Default for CommitteeConfig {
    fn default() -> Self {
        Self { n_committee: 101, share_crosses: false }
    }
}

/// Everything that determines the numbers of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub architecture: Architecture,
    pub strategy: Strategy,
    pub hyper: HyperParams,
    pub examples_per_label: usize,
    pub n_samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub committee: Option<CommitteeConfig>,
    #[serde(default)]
    pub label_order: LabelOrder,
    #[serde(default)]
    pub reset_field_each_epoch: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.architecture.validate()?;
        self.hyper.validate(&self.architecture, self.strategy)?;
        if self.examples_per_label == 0 {
            return Err(ExperimentError::Invalid("examples_per_label must be at least 1".into()));
        }
        if self.n_samples == 0 {
            return Err(ExperimentError::Invalid("n_samples must be at least 1".into()));
        }
        if self.committee.as_ref().is_some_and(|c| c.n_committee == 0) {
            return Err(ExperimentError::Invalid("n_committee must be at least 1".into()));
        }
        Ok(())
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            strategy: self.strategy,
            hyper: self.hyper.clone(),
            label_order: self.label_order,
            reset_field_each_epoch: self.reset_field_each_epoch,
        }
    }

    fn replicas(&self) -> usize {
        self.committee.as_ref().map_or(1, |c| c.n_committee)
    }
}

/// First 16 hex digits of the SHA-256 of the config's JSON form.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(&Sha256::digest(&json)[..8])
}

/// The full training pool and the normalized (unmasked) test set.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub train: RawImageSet,
    pub test: PreparedSet,
}

impl ExperimentData {
    pub fn new(train: RawImageSet, test: &RawImageSet) -> Self {
        Self { train, test: PreparedSet::prepare(test, &ZeroVarianceMask::none()) }
    }

    /// Load the four MNIST IDX files from `dir`.
    pub fn load(dir: &Path) -> Result<Self, DataError> {
        let train = load_mnist(dir, Split::Train)?;
        let test = load_mnist(dir, Split::Test)?;
        Ok(Self::new(train, &test))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; 0 uses rayon's default.
    pub workers: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { workers: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub sample: usize,
    pub replica: usize,
    pub message: String,
}

/// Result of one sample: accuracy of replica 0 and, for committees, the
/// accuracy of the summed outputs of every replica that finished.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub sample: usize,
    pub accuracy: Option<f64>,
    pub committee_accuracy: Option<f64>,
    /// Mean accuracy over the finished replicas.
    pub replica_mean_accuracy: Option<f64>,
    pub committee_members: usize,
    pub masked_pixels: usize,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitteeResult {
    pub n_committee: usize,
    pub success_rate: f64,
    pub std: f64,
    pub per_sample: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub config_hash: String,
    /// Mean over the samples that finished (0 if none did).
    pub success_rate: f64,
    /// Sample standard deviation (divide by N - 1); 0 for a single sample.
    pub std: f64,
    pub n_samples: usize,
    pub per_sample: Vec<f64>,
    #[serde(default)]
    pub committee: Option<CommitteeResult>,
    pub samples: Vec<SampleOutcome>,
    pub failures: Vec<Failure>,
    pub workers: usize,
}

impl RunResult {
    pub fn error(&self) -> f64 {
        1.0 - self.success_rate
    }

    /// The run manifest: the result itself as pretty JSON.
    pub fn manifest_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    pub fn csv_record(&self) -> Vec<String> {
        let (c_rate, c_std, n_c) = match &self.committee {
            Some(c) => (c.success_rate.to_string(), c.std.to_string(), c.n_committee.to_string()),
            None => (String::new(), String::new(), String::new()),
        };
        vec![
            self.config_hash.clone(),
            self.config.examples_per_label.to_string(),
            self.config.hyper.epochs.to_string(),
            self.config.strategy.to_string(),
            self.per_sample.len().to_string(),
            self.success_rate.to_string(),
            self.std.to_string(),
            n_c,
            c_rate,
            c_std,
            self.failures.len().to_string(),
        ]
    }
}

pub const CSV_HEADER: [&str; 11] = [
    "config_hash",
    "examples_per_label",
    "epochs",
    "strategy",
    "n_samples",
    "success_rate",
    "std",
    "n_committee",
    "committee_success_rate",
    "committee_std",
    "failures",
];

pub fn write_results_csv<W: Write>(results: &[RunResult], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in results {
        w.write_record(r.csv_record())?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and sample standard deviation; the std of one value is 0, and an
/// empty list gives `(0, 0)`.
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

struct PreparedSample {
    train: PreparedSet,
    mask: ZeroVarianceMask,
}

fn prepare_sample(cfg: &ExperimentConfig, data: &ExperimentData, sample: usize) -> Result<PreparedSample, DataError> {
    let seeds = SeedTree::new(cfg.seed);
    let raw = balanced_subset(&data.train, cfg.examples_per_label, &mut seeds.rng(Stage::Subset, &[sample as u64]))?;
    let mask = zero_variance_mask(&raw)?;
    Ok(PreparedSample { train: PreparedSet::prepare(&raw, &mask), mask })
}

/// A trained replica together with the mask of its training subset.
#[derive(Debug, Clone)]
pub struct TrainedReplica {
    pub network: Network,
    pub state: ForwardState,
    pub mask: ZeroVarianceMask,
}

impl TrainedReplica {
    /// The network with first-layer weights of masked pixels set to zero,
    /// so it gives the same decisions on unmasked inputs. Crosses never
    /// involve masked pixels.
    pub fn masked_network(&self) -> Network {
        let mut net = self.network.clone();
        let layer = &mut net.layers[0];
        for j in 0..layer.n_out {
            for (w, &m) in layer.row_mut(j).iter_mut().zip(self.mask.as_slice()) {
                if m {
                    *w = 0.0;
                }
            }
        }
        net
    }
}

/// Train replica `replica` of sample `sample` exactly as [`run_experiment`]
/// does.
pub fn train_replica(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    sample: usize,
    replica: usize,
) -> Result<TrainedReplica, ExperimentError> {
    cfg.validate()?;
    let prep = prepare_sample(cfg, data, sample)?;
    let (network, state) = train_prepared(cfg, &prep, sample, replica)?;
    Ok(TrainedReplica { network, state, mask: prep.mask })
}

fn train_prepared(
    cfg: &ExperimentConfig,
    prep: &PreparedSample,
    sample: usize,
    replica: usize,
) -> Result<(Network, ForwardState), ExperimentError> {
    let seeds = SeedTree::new(cfg.seed);
    let path = [sample as u64, replica as u64];
    let share = cfg.committee.as_ref().is_some_and(|c| c.share_crosses);
    let cross_path = if share { [sample as u64, 0] } else { path };
    let arch = &cfg.architecture;
    let crosses = generate_crosses(
        &mut seeds.rng(Stage::Crosses, &cross_path),
        arch.n_crosses,
        arch.hidden[0],
        &prep.train,
    )?;
    let mut net = init_weights(arch, crosses, &mut seeds.rng(Stage::Init, &path))?;
    let mut state = ForwardState::new(&net);
    match train(&mut net, &mut state, &prep.train, &cfg.train_config(), &mut seeds.rng(Stage::Schedule, &path)) {
        Ok(_) => Ok((net, state)),
        Err(TrainError::Numeric(e)) => Err(e.into()),
        Err(TrainError::Network(e)) => Err(e.into()),
        Err(TrainError::Data(e)) => Err(e.into()),
        Err(TrainError::HyperParams(e)) => Err(e.into()),
    }
}

/// Train one replica and return its test outputs.
fn run_replica(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    prep: &PreparedSample,
    sample: usize,
    replica: usize,
) -> Result<Vec<f64>, ExperimentError> {
    let (net, state) = train_prepared(cfg, prep, sample, replica)?;
    Ok(test_outputs(&net, &state, &data.test, Some(&prep.mask), &cfg.hyper.field_amplitude)?)
}

/// Run every replica of one sample. Numeric divergence of a replica is
/// recorded as a failure; setup errors abort.
pub fn run_sample(cfg: &ExperimentConfig, data: &ExperimentData, sample: usize) -> Result<SampleOutcome, ExperimentError> {
    let prep = prepare_sample(cfg, data, sample)?;
    let labels = data.test.labels();
    let n_replicas = cfg.replicas();
    let results: Vec<Result<Vec<f64>, ExperimentError>> =
        (0..n_replicas).into_par_iter().map(|r| run_replica(cfg, data, &prep, sample, r)).collect();

    let mut sums = CommitteeSums::new(data.test.len());
    let mut failures = Vec::new();
    let mut accuracies = Vec::new();
    let mut first = None;
    for (replica, res) in results.into_iter().enumerate() {
        match res {
            Ok(outputs) => {
                let acc = 1.0 - error_rate(&outputs, labels);
                if replica == 0 {
                    first = Some(acc);
                }
                accuracies.push(acc);
                sums.add(&outputs);
            }
            Err(ExperimentError::Numeric(e)) => {
                let message = e.to_string();
                log::warn!("sample {sample} replica {replica} failed: {message}");
                failures.push(Failure { sample, replica, message });
            }
            Err(e) => return Err(e),
        }
    }
    let committee = cfg.committee.is_some() && sums.members() > 0;
    Ok(SampleOutcome {
        sample,
        accuracy: first,
        committee_accuracy: committee.then(|| 1.0 - sums.error_rate(labels)),
        replica_mean_accuracy: (!accuracies.is_empty()).then(|| accuracies.iter().sum::<f64>() / accuracies.len() as f64),
        committee_members: sums.members(),
        masked_pixels: prep.mask.count(),
        failures,
    })
}

/// `n_samples` independent subset/crosses/init/schedule draws.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    opts: RunOptions,
) -> Result<RunResult, ExperimentError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(opts.workers).build()?;
    let outcomes: Vec<SampleOutcome> = pool.install(|| {
        (0..cfg.n_samples)
            .into_par_iter()
            .map(|s| {
                let o = run_sample(cfg, data, s);
                if let Ok(o) = &o {
                    log::info!("sample {}/{}: accuracy {:?} committee {:?}", s + 1, cfg.n_samples, o.accuracy, o.committee_accuracy);
                }
                o
            })
            .collect::<Result<_, _>>()
    })?;
    Ok(summarize(cfg, outcomes, pool.current_num_threads()))
}

/// Aggregate per-sample outcomes in sample order.
fn summarize(cfg: &ExperimentConfig, samples: Vec<SampleOutcome>, workers: usize) -> RunResult {
    let per_sample: Vec<f64> = samples.iter().filter_map(|o| o.accuracy).collect();
    if per_sample.len() == 1 {
        log::warn!("single sample: std reported as 0");
    }
    let (success_rate, std) = mean_and_std(&per_sample);
    let committee = cfg.committee.as_ref().map(|c| {
        let per: Vec<f64> = samples.iter().filter_map(|o| o.committee_accuracy).collect();
        let (m, s) = mean_and_std(&per);
        CommitteeResult { n_committee: c.n_committee, success_rate: m, std: s, per_sample: per }
    });
    let failures = samples.iter().flat_map(|o| o.failures.iter().cloned()).collect();
    RunResult {
        config: cfg.clone(),
        config_hash: config_hash(cfg),
        success_rate,
        std,
        n_samples: cfg.n_samples,
        per_sample,
        committee,
        samples,
        failures,
        workers,
    }
}
