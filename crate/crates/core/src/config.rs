//! One JSON file describing a whole run: data source, split, model,
//! training and output directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{load_csv, synth_generate, ColumnRoles, DataError, SplitSpec, SynthSpec, TimeSeriesDataset};
use crate::model::{ModelConfig, ModelError};
use crate::train::{TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

impl From<ModelError> for ConfigError {
    fn from(e: ModelError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

impl From<TrainError> for ConfigError {
    fn from(e: TrainError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    pub roles: ColumnRoles,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
pub enum DataSource {
    Synth(SynthSpec),
    Csv(CsvSource),
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    #[serde(default)]
    pub split: SplitSpec,
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// Parses and validates.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate()?;
        self.train.validate()?;
        match &self.split {
            SplitSpec::Ratios { train, valid } => {
                if !(*train > 0.0 && *valid > 0.0 && train + valid < 1.0) {
                    return Err(ConfigError::Invalid(format!(
                        "split ratios train={train}, valid={valid} must be positive and sum below 1"
                    )));
                }
            }
            SplitSpec::Indices { train_end, valid_end } => {
                if train_end >= valid_end {
                    return Err(ConfigError::Invalid(format!(
                        "split indices need train_end < valid_end, got {train_end} and {valid_end}"
                    )));
                }
            }
        }
        match &self.data {
            DataSource::Csv(c) if c.path.as_os_str().is_empty() => {
                Err(ConfigError::Invalid("data.csv.path is empty".into()))
            }
            DataSource::Csv(c) if c.roles.target.is_empty() => {
                Err(ConfigError::Invalid("data.csv.roles.target is empty".into()))
            }
            DataSource::Synth(s) if s.length <= self.model.lookback + self.model.horizon => {
                Err(ConfigError::Invalid(format!(
                    "synthetic length {} is too short for lookback {} plus horizon {}",
                    s.length, self.model.lookback, self.model.horizon
                )))
            }
            _ => Ok(()),
        }
    }

    /// Loads or generates the dataset. Relative CSV paths resolve against
    /// the working directory.
    pub fn load_dataset(&self) -> Result<TimeSeriesDataset, ConfigError> {
        let ds = match &self.data {
            DataSource::Synth(spec) => synth_generate(spec, &self.split)?,
            DataSource::Csv(c) => load_csv(&c.path, &c.roles, &self.split)?,
        };
        Ok(ds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "data": {"synth": {"length": 600}},
        "model": {"lookback": 48, "horizon": 12, "patch_len": 12, "d_model": 8,
                  "n_heads": 2, "n_enc": 1, "d_ff": 8}
    }"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.split, SplitSpec::default());
        assert_eq!(c.train, TrainConfig::default());
        assert_eq!(c.output_dir, PathBuf::from("runs"));
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
        let ds = c.load_dataset().unwrap();
        assert_eq!(ds.len(), 600);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let extra = MINIMAL.replacen("\"data\"", "\"epochs\": 3, \"data\"", 1);
        assert!(matches!(RunConfig::from_json(&extra), Err(ConfigError::Json(_))));
        let nested = MINIMAL.replace("\"d_ff\": 8", "\"d_ff\": 8, \"heads\": 2");
        assert!(RunConfig::from_json(&nested).is_err());
    }

    #[test]
    fn inconsistent_values_are_rejected() {
        let heads = MINIMAL.replace("\"n_heads\": 2", "\"n_heads\": 3");
        assert!(matches!(RunConfig::from_json(&heads), Err(ConfigError::Invalid(m)) if m.contains("n_heads")));
        let short = MINIMAL.replace("600", "50");
        assert!(RunConfig::from_json(&short).is_err());
        let split = MINIMAL.replacen("{", r#"{"split": {"train": 0.8, "valid": 0.3},"#, 1);
        assert!(RunConfig::from_json(&split).is_err());
    }
}
