//! Experiment configuration: defaults, config files and flag overrides.

use std::f64::consts::FRAC_PI_4;
use std::fmt;
use std::path::{Path, PathBuf};

use qwalk_core::analysis::{EnsembleSpec, Model};
use qwalk_core::measure::MeasurementSchedule;
use qwalk_core::{CoinOperator, Qubit};
use serde::{Deserialize, Serialize};

pub const DEFAULT_STEPS: u64 = 1000;
pub const DEFAULT_TRAJECTORIES: u64 = 1000;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Coherent,
    Measure,
    Links,
    Classical,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Coherent => "coherent",
            Self::Measure => "measure",
            Self::Links => "links",
            Self::Classical => "classical",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    fn is_csv(&self) -> bool {
        *self == OutputFormat::Csv
    }
}

/// A fully explicit experiment. This is what gets embedded in result files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub steps: u64,
    pub trajectories: u64,
    pub seed: u64,
    pub theta: f64,
    /// `[Re a, Im a, Re b, Im b]`.
    pub qubit: Qubit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval_uniform: Option<[u32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervals: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshots: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "OutputFormat::is_csv")]
    pub output_format: OutputFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
}

/// Partial configuration as read from a file or from flags. Later layers
/// override earlier ones field by field.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub model: Option<ModelKind>,
    pub steps: Option<u64>,
    pub trajectories: Option<u64>,
    pub seed: Option<u64>,
    pub theta: Option<f64>,
    pub qubit: Option<Qubit>,
    pub period: Option<u32>,
    pub interval_uniform: Option<[u32; 2]>,
    pub intervals: Option<Vec<u32>>,
    pub p: Option<f64>,
    pub snapshots: Option<Vec<u64>>,
    pub output_path: Option<PathBuf>,
    pub output_format: Option<OutputFormat>,
    pub preset: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("conflicting model parameters `{0}` and `{1}`")]
    Conflict(&'static str, &'static str),
    #[error("model `{model}` requires `{key}`")]
    Missing { model: ModelKind, key: &'static str },
    #[error("`{key}` does not apply to model `{model}`")]
    Unused { model: ModelKind, key: &'static str },
    #[error("`{0}` must not exceed {max}", max = i64::MAX)]
    TooLarge(&'static str),
    #[error("no model given")]
    NoModel,
    #[error("invalid configuration: {0}")]
    Invalid(#[from] qwalk_core::Error),
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl ConfigLayer {
    /// Overlays `other` on `self`; fields set in `other` win.
    pub fn merge(self, other: ConfigLayer) -> ConfigLayer {
        ConfigLayer {
            model: other.model.or(self.model),
            steps: other.steps.or(self.steps),
            trajectories: other.trajectories.or(self.trajectories),
            seed: other.seed.or(self.seed),
            theta: other.theta.or(self.theta),
            qubit: other.qubit.or(self.qubit),
            period: other.period.or(self.period),
            interval_uniform: other.interval_uniform.or(self.interval_uniform),
            intervals: other.intervals.or(self.intervals),
            p: other.p.or(self.p),
            snapshots: other.snapshots.or(self.snapshots),
            output_path: other.output_path.or(self.output_path),
            output_format: other.output_format.or(self.output_format),
            preset: other.preset.or(self.preset),
        }
    }

    /// Reads a TOML or JSON layer, chosen by file extension (TOML otherwise).
    pub fn from_file(path: &Path) -> Result<ConfigLayer, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let parse_err = |message: String| ConfigError::Parse {
            path: path.to_owned(),
            message,
        };
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| parse_err(e.to_string())),
            _ => toml::from_str(&text).map_err(|e| parse_err(e.to_string())),
        }
    }

    /// Fills defaults and checks that the model parameters are consistent.
    pub fn resolve(self) -> Result<ExperimentConfig, ConfigError> {
        let model = self.model.ok_or(ConfigError::NoModel)?;
        let params: [(&'static str, bool); 4] = [
            ("period", self.period.is_some()),
            ("interval_uniform", self.interval_uniform.is_some()),
            ("intervals", self.intervals.is_some()),
            ("p", self.p.is_some()),
        ];
        let set: Vec<&'static str> = params.iter().filter(|(_, on)| *on).map(|(k, _)| *k).collect();
        if let [a, b, ..] = set[..] {
            return Err(ConfigError::Conflict(a, b));
        }
        match (model, set.first().copied()) {
            (ModelKind::Coherent, Some(key)) => return Err(ConfigError::Unused { model, key }),
            (ModelKind::Measure, None) => return Err(ConfigError::Missing { model, key: "period" }),
            (ModelKind::Measure, Some("p")) => return Err(ConfigError::Unused { model, key: "p" }),
            (ModelKind::Links | ModelKind::Classical, None) => {
                return Err(ConfigError::Missing { model, key: "p" })
            }
            (ModelKind::Links | ModelKind::Classical, Some(key)) if key != "p" => {
                return Err(ConfigError::Unused { model, key })
            }
            _ => {}
        }
        for (key, value) in [
            ("steps", self.steps),
            ("trajectories", self.trajectories),
            ("seed", self.seed),
        ] {
            if value.is_some_and(|v| v > i64::MAX as u64) {
                return Err(ConfigError::TooLarge(key));
            }
        }
        let config = ExperimentConfig {
            model,
            steps: self.steps.unwrap_or(DEFAULT_STEPS),
            trajectories: self.trajectories.unwrap_or(DEFAULT_TRAJECTORIES),
            seed: self.seed.unwrap_or(DEFAULT_SEED),
            theta: self.theta.unwrap_or(FRAC_PI_4),
            qubit: self.qubit.unwrap_or_else(Qubit::symmetric),
            period: self.period,
            interval_uniform: self.interval_uniform,
            intervals: self.intervals,
            p: self.p,
            snapshots: self.snapshots.unwrap_or_default(),
            output_format: self.output_format.unwrap_or_else(|| match &self.output_path {
                Some(path) if path.extension().is_some_and(|e| e == "json") => OutputFormat::Json,
                _ => OutputFormat::Csv,
            }),
            output_path: self.output_path,
            preset: self.preset,
        };
        config.ensemble_spec()?;
        Ok(config)
    }
}

impl From<ExperimentConfig> for ConfigLayer {
    fn from(c: ExperimentConfig) -> Self {
        ConfigLayer {
            model: Some(c.model),
            steps: Some(c.steps),
            trajectories: Some(c.trajectories),
            seed: Some(c.seed),
            theta: Some(c.theta),
            qubit: Some(c.qubit),
            period: c.period,
            interval_uniform: c.interval_uniform,
            intervals: c.intervals,
            p: c.p,
            snapshots: Some(c.snapshots),
            output_path: c.output_path,
            output_format: Some(c.output_format),
            preset: c.preset,
        }
    }
}

impl ExperimentConfig {
    pub fn schedule(&self) -> Result<Option<MeasurementSchedule>, qwalk_core::Error> {
        Ok(match (self.period, self.interval_uniform, &self.intervals) {
            (Some(t), _, _) => Some(MeasurementSchedule::periodic(t)?),
            (_, Some([lo, hi]), _) => Some(MeasurementSchedule::uniform(lo, hi)?),
            (_, _, Some(list)) => Some(MeasurementSchedule::explicit(list.clone())?),
            _ => None,
        })
    }

    pub fn ensemble_spec(&self) -> Result<EnsembleSpec, ConfigError> {
        let missing = |key| ConfigError::Missing {
            model: self.model,
            key,
        };
        let model = match self.model {
            ModelKind::Coherent => Model::Coherent,
            ModelKind::Measure => Model::Measured {
                schedule: self.schedule()?.ok_or(missing("period"))?,
            },
            ModelKind::Links => Model::BrokenLinks {
                p: self.p.ok_or(missing("p"))?,
            },
            ModelKind::Classical => Model::Classical {
                p: self.p.ok_or(missing("p"))?,
            },
        };
        let spec = EnsembleSpec::new(model, self.steps, self.trajectories, self.seed)
            .with_coin(CoinOperator::new(self.theta)?)
            .with_qubit(self.qubit)
            .with_snapshots(self.snapshots.iter().copied());
        spec.validate()?;
        Ok(spec)
    }

    /// Canonical TOML rendering, readable back with [`ConfigLayer::from_file`].
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config is always representable as JSON")
    }

    pub fn from_toml(text: &str) -> Result<ExperimentConfig, ConfigError> {
        let layer: ConfigLayer = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::new(),
            message: e.to_string(),
        })?;
        layer.resolve()
    }

    pub fn from_json(text: &str) -> Result<ExperimentConfig, ConfigError> {
        let layer: ConfigLayer = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::new(),
            message: e.to_string(),
        })?;
        layer.resolve()
    }
}
