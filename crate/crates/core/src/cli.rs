//! The `powerscale` command line.
//!
//! Exit codes: 0 success, 1 I/O, 2 configuration, 3 data, 4 numeric
//! divergence, 5 checkpoint format.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::config::{self, ConfigError, RunConfig, FAMILIES};
use crate::data::DataError;
use crate::equivalence::{decision_agreement, expand_two_to_three, EquivalenceError};
use crate::evalsuite::{
    run_experiment, test_error, train_replica, write_results_csv, ExperimentData, ExperimentError, RunOptions,
    RunResult,
};
use crate::gridopt::{
    sequential_coordinate_search, staged_grid_search, EvalCache, ExperimentObjective, GridError, ParamSpace,
    SearchManifest, SearchOptions,
};
use crate::io::write_atomic;
use crate::network::{read_checkpoint, write_checkpoint, Checkpoint, CheckpointError, ForwardState};
use crate::rng::{SeedTree, Stage};
use crate::scaling::{
    crossover_with_sensitivity, svg_plot, write_fit_reports, FitError, FitMode, FitReport, PlotSeries, ScalingSeries,
};

#[derive(Debug, Parser)]
#[command(name = "powerscale", version, about = "Small-data MNIST training runs and power-law analysis of their test error")]
pub struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train and evaluate one configuration over its samples.
    Run(RunArgs),
    /// Run one configuration per dataset size and collect a scaling series.
    Sweep(CommonArgs),
    /// Fit power laws to series files or published tables.
    Fit(FitArgs),
    /// Hyperparameter grid search.
    Grid(GridArgs),
    /// Expand a two-hidden-layer checkpoint into three hidden layers.
    Expand(ExpandArgs),
    /// List shipped presets.
    Presets(PresetsArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Run file (TOML), or the manifest.json of an earlier run.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Shipped preset name.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Independent samples per configuration.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Soft-committee size; 0 disables.
    #[arg(long)]
    pub committee: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "powerscale-out")]
    pub out: PathBuf,
    /// MNIST directory holding the four IDX files.
    #[arg(long, env = config::DATA_DIR_ENV)]
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Also save the network of sample 0 as `checkpoint.bin`.
    #[arg(long)]
    pub save_checkpoint: bool,
    /// Evaluate this checkpoint on the test set instead of training.
    #[arg(long, conflicts_with_all = ["config", "preset"])]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Series CSV files (examples_per_label, error, std, n_samples).
    #[arg(long)]
    pub series: Vec<PathBuf>,
    /// Published table of a preset family, e.g. appC_1layer.
    #[arg(long)]
    pub published: Vec<String>,
    /// Use the committee columns of published tables.
    #[arg(long)]
    pub committee: bool,
    /// Weight points by inverse variance of the log error.
    #[arg(long)]
    pub weighted: bool,
    /// Extrapolate to these sizes.
    #[arg(long, default_values_t = [6000.0])]
    pub at: Vec<f64>,
    /// Report the size needed to reach these errors.
    #[arg(long)]
    pub target: Vec<f64>,
    #[arg(long, default_value = "powerscale-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Reuse evaluations recorded by an interrupted search in the output directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct ExpandArgs {
    /// Two-hidden-layer checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Random Gaussian inputs to compare on, besides the test set.
    #[arg(long, default_value_t = 10_000)]
    pub random_inputs: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Skip the MNIST test set comparison.
    #[arg(long)]
    pub no_test_set: bool,
    #[arg(long, default_value = "powerscale-out")]
    pub out: PathBuf,
    #[arg(long, env = config::DATA_DIR_ENV)]
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PresetsArgs {
    /// Print the TOML of one preset.
    #[arg(long)]
    pub show: Option<String>,
}

/// A failure with its exit-code class.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("numeric: {0}")]
    Numeric(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Checkpoint(_) => 5,
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Data(_) => CliError::Data(e.to_string()),
            ExperimentError::Numeric(_) => CliError::Numeric(e.to_string()),
            ExperimentError::Pool(_) => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Io(e.to_string()),
            ConfigError::Experiment(inner) => inner.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<GridError> for CliError {
    fn from(e: GridError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Checkpoint(e.to_string()),
        }
    }
}

impl From<EquivalenceError> for CliError {
    fn from(e: EquivalenceError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    write_atomic(path, bytes.as_ref()).map_err(io_err(path))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing csv to memory");
    buf
}

/// Parse arguments, run, and map the outcome to an exit code.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run(a) => cmd_run(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Grid(a) => cmd_grid(&a),
        Command::Expand(a) => cmd_expand(&a),
        Command::Presets(a) => cmd_presets(&a),
    }
}

impl CommonArgs {
    fn run_config(&self) -> Result<RunConfig, CliError> {
        let mut rc = match (&self.config, &self.preset) {
            (Some(p), _) => RunConfig::load(p)?,
            (None, Some(name)) => RunConfig { preset: Some(name.clone()), ..RunConfig::default() },
            (None, None) => return Err(CliError::Config("give --config or --preset".into())),
        };
        rc.seed = self.seed.or(rc.seed);
        rc.n_samples = self.samples.or(rc.n_samples);
        rc.epochs = self.epochs.or(rc.epochs);
        rc.n_committee = self.committee.or(rc.n_committee);
        rc.workers = self.workers.or(rc.workers);
        rc.data_dir = self.data_dir.clone().or(rc.data_dir);
        Ok(rc)
    }
}

fn load_data(rc: &RunConfig) -> Result<ExperimentData, CliError> {
    let dir = rc.data_dir();
    log::info!("loading MNIST from {}", dir.display());
    Ok(ExperimentData::load(&dir)?)
}

fn run_options(rc: &RunConfig) -> RunOptions {
    RunOptions { workers: rc.workers.unwrap_or(1) }
}

fn describe(r: &RunResult) -> String {
    let mut s = format!(
        "{}/label, {} epochs: success rate {:.4} +- {:.4} over {} samples",
        r.config.examples_per_label,
        r.config.hyper.epochs,
        r.success_rate,
        r.std,
        r.per_sample.len()
    );
    if let Some(c) = &r.committee {
        s += &format!("; committee of {}: {:.4} +- {:.4}", c.n_committee, c.success_rate, c.std);
    }
    s
}

fn diverged(results: &[RunResult]) -> Result<(), CliError> {
    let n: usize = results.iter().map(|r| r.failures.len()).sum();
    if n > 0 {
        return Err(CliError::Numeric(format!("{n} training runs diverged (see manifest)")));
    }
    Ok(())
}

fn cmd_run(a: &RunArgs) -> Result<(), CliError> {
    if let Some(path) = &a.checkpoint {
        return evaluate_checkpoint(path, a.common.data_dir.clone());
    }
    let rc = a.common.run_config()?;
    let cfg = rc.resolve()?;
    let data = load_data(&rc)?;
    let result = run_experiment(&cfg, &data, run_options(&rc))?;
    let out = &a.common.out;
    write(&out.join("results.csv"), csv_bytes(|b| write_results_csv(std::slice::from_ref(&result), b)))?;
    write(&out.join("manifest.json"), result.manifest_json())?;
    let mut resolved = RunConfig::from_experiment(cfg.clone());
    resolved.reference = rc.reference();
    write(&out.join("config.toml"), resolved.to_toml())?;
    println!("{}", describe(&result));
    if let Some(r) = rc.reference() {
        println!("published: {:.4} +- {:.4}", r.success_rate, r.std);
        if let (Some(c), Some(s)) = (r.committee_success_rate, r.committee_std) {
            println!("published committee: {c:.4} +- {s:.4}");
        }
    }
    if a.save_checkpoint {
        let t = train_replica(&cfg, &data, 0, 0)?;
        let mut state = t.state.clone();
        state.freeze();
        let ckpt = Checkpoint::new(t.masked_network(), state, cfg.hyper.field_amplitude.clone(), Some(cfg.seed));
        let path = out.join("checkpoint.bin");
        write_checkpoint(&path, &ckpt)?;
        println!("checkpoint: {}", path.display());
    }
    diverged(std::slice::from_ref(&result))
}

fn evaluate_checkpoint(path: &Path, data_dir: Option<PathBuf>) -> Result<(), CliError> {
    let ckpt = read_checkpoint(path)?;
    let rc = RunConfig { data_dir, ..RunConfig::default() };
    let data = load_data(&rc)?;
    let err = test_error(&ckpt.network, &ckpt.state, &data.test, &ckpt.field_amplitude)
        .map_err(|e| CliError::Checkpoint(e.to_string()))?;
    println!("{}", ckpt.summary().trim_end());
    println!("test success rate {:.4}", 1.0 - err);
    Ok(())
}

fn cmd_sweep(a: &CommonArgs) -> Result<(), CliError> {
    let rc = a.run_config()?;
    let configs = match (&rc.sweep, &a.preset) {
        (None, Some(family)) if config::preset(family).is_err() => {
            let members = config::preset_family(family);
            if members.is_empty() {
                return Err(CliError::Config(format!("no preset or family named {family}")));
            }
            let names = members.into_iter().map(|p| p.name).collect();
            RunConfig { preset: None, sweep: Some(config::SweepSpec { presets: names, sizes: vec![] }), ..rc.clone() }
                .resolve_sweep()?
        }
        _ => rc.resolve_sweep()?,
    };
    let data = load_data(&rc)?;
    let mut results = Vec::new();
    for cfg in &configs {
        let r = run_experiment(cfg, &data, run_options(&rc))?;
        println!("{}", describe(&r));
        write(&a.out.join(format!("manifest_{}.json", cfg.examples_per_label)), r.manifest_json())?;
        results.push(r);
    }
    let label = rc.name.clone().or_else(|| a.preset.clone()).unwrap_or_else(|| "sweep".into());
    write(&a.out.join("results.csv"), csv_bytes(|b| write_results_csv(&results, b)))?;
    let series = ScalingSeries::from_results(&label, &results);
    write(&a.out.join("series.csv"), csv_bytes(|b| series.write_csv(b)))?;
    if results.iter().all(|r| r.committee.is_some()) && !results.is_empty() {
        let c = ScalingSeries::committee_from_results(format!("{label} committee"), &results);
        write(&a.out.join("committee_series.csv"), csv_bytes(|b| c.write_csv(b)))?;
    }
    println!("series: {} sizes written to {}", series.points.len(), a.out.join("series.csv").display());
    diverged(&results)
}

fn cmd_fit(a: &FitArgs) -> Result<(), CliError> {
    let mut all: Vec<ScalingSeries> = Vec::new();
    for path in &a.series {
        let file = std::fs::File::open(path).map_err(io_err(path))?;
        let label = path.file_stem().map_or("series".into(), |s| s.to_string_lossy().into_owned());
        all.push(ScalingSeries::read_csv(label, file)?);
    }
    for family in &a.published {
        if !FAMILIES.contains(&family.as_str()) {
            return Err(CliError::Config(format!("unknown table {family}; one of {}", FAMILIES.join(", "))));
        }
        all.push(config::published_series(family, a.committee)?);
    }
    if all.is_empty() {
        return Err(CliError::Config("give --series or --published".into()));
    }
    let mode = if a.weighted { FitMode::InverseVariance } else { FitMode::Ordinary };
    let reports: Vec<FitReport> =
        all.iter().map(|s| FitReport::new(s, mode, &a.at, &a.target)).collect::<Result<_, _>>()?;
    for r in &reports {
        let f = &r.fit;
        println!("{}: c0 = {:.4}, rho = {:.4} +- {:.4}, r2 = {:.4}", r.label, f.c0, f.rho, f.se_rho, f.r2);
        for (n, e) in &r.extrapolations {
            println!("  error at {n} examples/label: {e:.4}");
        }
        for (t, n) in &r.required {
            println!("  examples/label for error {t}: {n:.1}");
        }
    }
    write(&a.out.join("fit.csv"), csv_bytes(|b| write_fit_reports(&reports, b)))?;
    let plots: Vec<PlotSeries> = all.iter().zip(&reports).map(|(s, r)| PlotSeries { series: s, fit: Some(&r.fit) }).collect();
    let x_max = a.at.iter().copied().fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
    write(&a.out.join("plot.svg"), svg_plot(&plots, x_max))?;
    if all.len() >= 2 {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["series_a", "series_b", "n_star", "low", "high"]).expect("memory");
        for pair in all.windows(2) {
            match crossover_with_sensitivity(&pair[0], &pair[1], mode) {
                Ok(c) => {
                    println!("crossover {} / {}: {:.1} examples/label (range {:.1} to {:.1})", pair[0].label, pair[1].label, c.n_star, c.low, c.high);
                    w.write_record([&pair[0].label, &pair[1].label, &c.n_star.to_string(), &c.low.to_string(), &c.high.to_string()]).expect("memory");
                }
                Err(e) => println!("crossover {} / {}: {e}", pair[0].label, pair[1].label),
            }
        }
        write(&a.out.join("crossover.csv"), w.into_inner().expect("memory"))?;
    }
    Ok(())
}

fn cmd_grid(a: &GridArgs) -> Result<(), CliError> {
    let rc = a.common.run_config()?;
    let spec = rc.grid.clone().ok_or_else(|| CliError::Config("no `[grid]` table in the run file".into()))?;
    let base = rc.resolve()?;
    let space = ParamSpace::new(spec.axes.clone());
    space.validate()?;
    let order: Vec<usize> = match &spec.order {
        Some(names) => names
            .iter()
            .map(|n| space.axes.iter().position(|ax| &ax.name == n).ok_or_else(|| GridError::UnknownParameter(n.clone())))
            .collect::<Result<_, _>>()?,
        None => vec![],
    };
    let data = load_data(&rc)?;
    let mut objective = ExperimentObjective::new(base.clone(), &space, &data)?;
    objective.committee = spec.committee;
    let manifest = SearchManifest {
        base: base.clone(),
        space: space.clone(),
        order: order.clone(),
        stages: spec.stages,
        max_sweeps: spec.max_sweeps,
        committee: spec.committee,
        search_seed: objective.search_seed(),
    };
    let out = &a.common.out;
    let manifest_path = out.join("search.json");
    if a.resume && manifest_path.exists() {
        let text = std::fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
        let old: SearchManifest = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", manifest_path.display())))?;
        if old != manifest {
            return Err(CliError::Config("--resume: the search differs from the one recorded in search.json".into()));
        }
    }
    write(&manifest_path, serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let cache = EvalCache::open_journal(&out.join("evaluations.csv"), a.resume)?;
    let resumed = cache.len();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(rc.workers.unwrap_or(1))
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    let trace = pool.install(|| {
        if order.is_empty() {
            staged_grid_search(&space, &objective, spec.stages, &cache)
        } else {
            let opts = SearchOptions { stages: spec.stages, max_sweeps: spec.max_sweeps };
            sequential_coordinate_search(&space, &objective, &order, opts, &cache)
        }
    })?;
    write(&out.join("trace.csv"), csv_bytes(|b| trace.write_csv(b)))?;
    let best = trace.incumbent().expect("search evaluates at least one point");
    let mut incumbent = objective.config_at(&best.params)?;
    incumbent.seed = base.seed;
    let mut preset = RunConfig::from_experiment(incumbent);
    preset.name = Some("incumbent".into());
    preset.description = Some(format!(
        "grid incumbent, search error {:.4} +- {:.4} over {} samples",
        best.eval.mean_error, best.eval.std, best.eval.n_samples
    ));
    write(&out.join("incumbent.toml"), preset.to_toml())?;
    let params: Vec<String> = space.axes.iter().zip(&best.params).map(|(ax, v)| format!("{} = {v}", ax.name)).collect();
    println!("points: {}, evaluated: {}, resumed from journal: {resumed}", trace.entries.len(), trace.evaluations());
    println!("incumbent: {} (error {:.4} +- {:.4})", params.join(", "), best.eval.mean_error, best.eval.std);
    Ok(())
}

#[derive(Serialize)]
struct AgreementReport {
    source: String,
    expanded: String,
    test_set_examples: usize,
    test_set_agreement: Option<f64>,
    random_inputs: usize,
    random_seed: u64,
    random_agreement: Option<f64>,
}

fn cmd_expand(a: &ExpandArgs) -> Result<(), CliError> {
    let ckpt = read_checkpoint(&a.checkpoint)?;
    let expanded = expand_two_to_three(&ckpt.network)?;
    let n_in = ckpt.network.architecture().n_inputs;
    let mut report = AgreementReport {
        source: a.checkpoint.display().to_string(),
        expanded: a.out.join("expanded.bin").display().to_string(),
        test_set_examples: 0,
        test_set_agreement: None,
        random_inputs: a.random_inputs,
        random_seed: a.seed,
        random_agreement: None,
    };
    if !a.no_test_set {
        let rc = RunConfig { data_dir: a.data_dir.clone(), ..RunConfig::default() };
        let test = load_data(&rc)?.test;
        let inputs: Vec<f64> = test.inputs().flatten().copied().collect();
        report.test_set_examples = test.len();
        report.test_set_agreement = Some(decision_agreement(&ckpt.network, &expanded, &inputs)?);
    }
    if a.random_inputs > 0 {
        let mut rng = SeedTree::new(a.seed).rng(Stage::Auxiliary, &[]);
        let inputs: Vec<f64> = (0..a.random_inputs * n_in).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        report.random_agreement = Some(decision_agreement(&ckpt.network, &expanded, &inputs)?);
    }
    let depth = expanded.architecture().hidden.len();
    let mut state = ForwardState::new(&expanded);
    state.freeze();
    write_checkpoint(&a.out.join("expanded.bin"), &Checkpoint::new(expanded, state, vec![0.0; depth], ckpt.seed))?;
    write(&a.out.join("agreement.json"), serde_json::to_string_pretty(&report).expect("report serializes"))?;
    if let Some(t) = report.test_set_agreement {
        println!("test set agreement: {t} over {} examples", report.test_set_examples);
    }
    if let Some(r) = report.random_agreement {
        println!("random input agreement: {r} over {} inputs", a.random_inputs);
    }
    Ok(())
}

fn cmd_presets(a: &PresetsArgs) -> Result<(), CliError> {
    if let Some(name) = &a.show {
        let text = config::preset_source(name).ok_or_else(|| CliError::Config(format!("unknown preset {name}")))?;
        print!("{text}");
        return Ok(());
    }
    for p in config::presets() {
        let published = p.reference.map_or(String::new(), |r| format!("{:.4} +- {:.4}", r.success_rate, r.std));
        println!("{:<22} {:<80} {published}", p.name, p.description);
    }
    Ok(())
}
