//! Shipped presets and run configuration files.
//!
//! A run file is TOML. It names a preset or spells out a full
//! `[experiment]` table, optionally overriding seed, sample count, epochs
//! or committee size. Preset files are themselves valid run files.
//!
//! ```toml
//! preset = "appD_2layer_30"
//! seed = 7
//! n_samples = 5
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::evalsuite::{CommitteeConfig, ExperimentConfig, ExperimentError};
use crate::gridopt::ParamAxis;
use crate::scaling::ScalingSeries;

/// Default MNIST directory, unless overridden by [`DATA_DIR_ENV`].
pub const DEFAULT_DATA_DIR: &str = "/root/data/mnist";
pub const DATA_DIR_ENV: &str = "POWERSCALE_DATA_DIR";

macro_rules! presets {
    ($($name:literal),* $(,)?) => {
        const PRESET_SOURCES: &[(&str, &str)] = &[$(($name, include_str!(concat!("../presets/", $name, ".toml")))),*];
    };
}

presets!(
    "appB_momentum_9", "appB_momentum_15", "appB_momentum_30", "appB_momentum_60",
    "appB_accelerated_15", "appB_accelerated_30",
    "appC_momentum_30", "appC_momentum_60", "appC_momentum_120", "appC_momentum_240",
    "appC_accelerated_30", "appC_accelerated_60", "appC_accelerated_120", "appC_accelerated_240",
    "appC_1layer_30", "appC_1layer_60", "appC_1layer_120", "appC_1layer_240",
    "appD_2layer_30", "appD_2layer_60", "appD_2layer_120", "appD_2layer_240",
    "appD_3layer_30", "appD_3layer_60", "appD_3layer_120", "appD_3layer_240",
    "appE_1layer_9", "appE_1layer_15", "appE_1layer_30", "appE_1layer_60",
    "appE_2layer_9", "appE_2layer_15", "appE_2layer_30", "appE_2layer_60",
    "appE_3layer_9", "appE_3layer_15", "appE_3layer_30", "appE_3layer_60",
);

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{origin}: {source}")]
    Toml { origin: String, source: Box<toml::de::Error> },
    #[error("{origin}: {source}")]
    Json { origin: String, source: serde_json::Error },
    #[error("unknown preset {0:?} (see `powerscale presets`)")]
    UnknownPreset(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
}

/// Published outcome attached to a preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reference {
    pub success_rate: f64,
    pub std: f64,
    #[serde(default)]
    pub committee_success_rate: Option<f64>,
    #[serde(default)]
    pub committee_std: Option<f64>,
    #[serde(default)]
    pub n_committee: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: String,
    pub description: String,
    pub experiment: ExperimentConfig,
    pub reference: Option<Reference>,
}

/// Which grid search to run and over what.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub axes: Vec<ParamAxis>,
    /// Axis names in search order; joint grid search when absent.
    #[serde(default)]
    pub order: Option<Vec<String>>,
    #[serde(default = "default_stages")]
    pub stages: usize,
    #[serde(default = "default_sweeps")]
    pub max_sweeps: usize,
    /// Minimize committee error instead of single-network error.
    #[serde(default)]
    pub committee: bool,
}

fn default_stages() -> usize {
    3
}

fn default_sweeps() -> usize {
    4
}

/// Sizes for a sweep: each entry a preset, or one base experiment at
/// several sizes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub presets: Vec<String>,
    #[serde(default)]
    pub sizes: Vec<usize>,
}

/// Contents of a run file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub examples_per_label: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    /// Committee size; 0 disables the committee.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_committee: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub share_crosses: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Reference>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Toml { origin: origin.to_string(), source: Box::new(e) })
    }

    /// Read a TOML run file, or the JSON manifest of an earlier run, whose
    /// `config` becomes the experiment.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let origin = path.display().to_string();
        if path.extension().is_some_and(|e| e == "json") {
            #[derive(Deserialize)]
            struct Manifest {
                config: ExperimentConfig,
            }
            let m: Manifest = serde_json::from_str(&text).map_err(|source| ConfigError::Json { origin, source })?;
            return Ok(Self { experiment: Some(m.config), ..Self::default() });
        }
        Self::from_toml(&text, &origin)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// A run file holding exactly `cfg`.
    pub fn from_experiment(cfg: ExperimentConfig) -> Self {
        Self { experiment: Some(cfg), ..Self::default() }
    }

    fn base(&self) -> Result<ExperimentConfig, ConfigError> {
        match (&self.preset, &self.experiment) {
            (Some(_), Some(_)) => Err(ConfigError::Invalid("give either `preset` or `[experiment]`, not both".into())),
            (Some(p), None) => Ok(preset(p)?.experiment),
            (None, Some(e)) => Ok(e.clone()),
            (None, None) => Err(ConfigError::Invalid("no `preset` and no `[experiment]` table".into())),
        }
    }

    fn apply_overrides(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.n_samples {
            cfg.n_samples = n;
        }
        if let Some(e) = self.epochs {
            cfg.hyper.epochs = e;
        }
        if let Some(n) = self.examples_per_label {
            cfg.examples_per_label = n;
        }
        match self.n_committee {
            Some(0) => cfg.committee = None,
            Some(n) => cfg.committee.get_or_insert_with(CommitteeConfig::default).n_committee = n,
            None => {}
        }
        if let (Some(share), Some(c)) = (self.share_crosses, cfg.committee.as_mut()) {
            c.share_crosses = share;
        }
    }

    /// The validated experiment this file describes.
    pub fn resolve(&self) -> Result<ExperimentConfig, ConfigError> {
        let mut cfg = self.base()?;
        self.apply_overrides(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    /// One validated experiment per sweep entry, in the listed order.
    pub fn resolve_sweep(&self) -> Result<Vec<ExperimentConfig>, ConfigError> {
        let spec = self.sweep.as_ref().ok_or_else(|| ConfigError::Invalid("no `[sweep]` table".into()))?;
        if self.examples_per_label.is_some() {
            return Err(ConfigError::Invalid("a sweep sets the sizes itself; drop `examples_per_label`".into()));
        }
        let configs: Vec<ExperimentConfig> = match (spec.presets.is_empty(), spec.sizes.is_empty()) {
            (false, true) => spec.presets.iter().map(|p| preset(p).map(|p| p.experiment)).collect::<Result<_, _>>()?,
            (true, false) => {
                let base = self.base()?;
                spec.sizes.iter().map(|&n| ExperimentConfig { examples_per_label: n, ..base.clone() }).collect()
            }
            _ => return Err(ConfigError::Invalid("`[sweep]` needs exactly one of `presets` or `sizes`".into())),
        };
        configs
            .into_iter()
            .map(|mut c| {
                self.apply_overrides(&mut c);
                c.validate()?;
                Ok(c)
            })
            .collect()
    }

    /// Data directory: the file's setting, else the environment, else the default.
    pub fn data_dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(default_data_dir)
    }

    /// Published values of the named preset, or of this file.
    pub fn reference(&self) -> Option<Reference> {
        self.reference.clone().or_else(|| self.preset.as_deref().and_then(|p| preset(p).ok()?.reference))
    }
}

pub fn default_data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV).map_or_else(|| PathBuf::from(DEFAULT_DATA_DIR), PathBuf::from)
}

fn parse_preset(name: &str, text: &str) -> Result<Preset, ConfigError> {
    let rc = RunConfig::from_toml(text, name)?;
    let experiment = rc.resolve()?;
    Ok(Preset {
        name: rc.name.unwrap_or_else(|| name.to_string()),
        description: rc.description.unwrap_or_default(),
        experiment,
        reference: rc.reference,
    })
}

/// Every shipped preset, in table order.
pub fn presets() -> Vec<Preset> {
    PRESET_SOURCES.iter().map(|(n, t)| parse_preset(n, t).expect("shipped presets parse")).collect()
}

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESET_SOURCES.iter().map(|(n, _)| *n)
}

pub fn preset(name: &str) -> Result<Preset, ConfigError> {
    let (n, text) =
        PRESET_SOURCES.iter().find(|(n, _)| *n == name).ok_or_else(|| ConfigError::UnknownPreset(name.into()))?;
    parse_preset(n, text)
}

/// A shipped preset's experiment with its sample count and seed replaced.
pub fn preset_config(name: &str, n_samples: usize, seed: u64) -> Result<ExperimentConfig, ConfigError> {
    RunConfig { preset: Some(name.into()), n_samples: Some(n_samples), seed: Some(seed), ..RunConfig::default() }.resolve()
}

/// Raw TOML of a shipped preset.
pub fn preset_source(name: &str) -> Option<&'static str> {
    PRESET_SOURCES.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Presets whose name starts with `family` followed by `_<size>`, by size.
pub fn preset_family(family: &str) -> Vec<Preset> {
    let mut v: Vec<Preset> = presets()
        .into_iter()
        .filter(|p| p.name.strip_prefix(family).and_then(|r| r.strip_prefix('_')).is_some_and(|r| r.parse::<usize>().is_ok()))
        .collect();
    v.sort_by_key(|p| p.experiment.examples_per_label);
    v
}

/// The published error-versus-size table of a preset family, for example
/// `appC_1layer`. With `committee`, the committee columns are used and
/// sizes without them are skipped.
pub fn published_series(family: &str, committee: bool) -> Result<ScalingSeries, ConfigError> {
    let members = preset_family(family);
    if members.is_empty() {
        return Err(ConfigError::UnknownPreset(format!("{family}_*")));
    }
    let label = if committee { format!("{family} committee (published)") } else { format!("{family} (published)") };
    let mut series = ScalingSeries::new(label);
    for p in members {
        let Some(r) = p.reference else { continue };
        let n = p.experiment.examples_per_label as f64;
        let (rate, std, n_samples) = if committee {
            match (r.committee_success_rate, r.committee_std) {
                (Some(c), Some(s)) => (c, s, 0),
                _ => continue,
            }
        } else {
            (r.success_rate, r.std, 0)
        };
        series.push(n, 1.0 - rate, std, n_samples);
    }
    Ok(series)
}

/// Families with published tables, for `--published`.
pub const FAMILIES: [&str; 10] = [
    "appB_momentum",
    "appB_accelerated",
    "appC_momentum",
    "appC_accelerated",
    "appC_1layer",
    "appD_2layer",
    "appD_3layer",
    "appE_1layer",
    "appE_2layer",
    "appE_3layer",
];
