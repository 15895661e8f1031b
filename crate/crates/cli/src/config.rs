//! Run configuration: a TOML file layered over built-in defaults, then
//! `AUTOSET_<SECTION>_<KEY>` environment overrides (`AUTOSET_SEED` for the
//! top-level seed).

use std::fs;
use std::path::{Path, PathBuf};

use autoset_core::dataio::SegmentationConfig;
use autoset_core::inference::{default_u_grid, CalibrationMetric};
use autoset_core::network::ArchitectureConfig;
use autoset_core::synthgen::SynthConfig;
use autoset_core::training::{Objective, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const ENV_PREFIX: &str = "AUTOSET_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    /// Generated in-process from the `[synthetic]` section.
    Synthetic,
    Wisdm,
    /// `t,label,ch1,…` CSV files.
    Generic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub format: DataFormat,
    pub inputs: Vec<PathBuf>,
    /// Annotation values read as Null in generic CSV files.
    pub null_labels: Vec<String>,
    /// Label order; derived from the data (sorted) when empty.
    pub vocabulary: Vec<String>,
    /// Trailing share of every stream held out for testing.
    pub test_fraction: f64,
    /// Share of the training segments carved out for validation.
    pub validation_fraction: f64,
    /// Share of the remaining training segments that keep their labels.
    pub labeled_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    pub total_length: usize,
    pub noise_std: f64,
    pub null_probability: f64,
    pub episode_min: usize,
    pub episode_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub prepared: PathBuf,
    pub models: PathBuf,
    pub outputs: PathBuf,
}

/// Optimizer settings of one training phase; the objective follows the mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub lr_decay: f64,
    pub patience: usize,
    pub max_epochs: usize,
}

impl TrainSection {
    pub fn to_train_config(&self, objective: Objective, seed: u64) -> TrainConfig {
        TrainConfig {
            objective,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            lr_decay: self.lr_decay,
            patience: self.patience,
            max_epochs: self.max_epochs,
            seed,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            batch_size: t.batch_size,
            lr_decay: t.lr_decay,
            patience: t.patience,
            max_epochs: t.max_epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceSection {
    /// Pinned U; calibrated on the validation archive when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    pub threshold: f64,
    pub calibration_metric: CalibrationMetric,
    pub u_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataSection,
    pub synthetic: SyntheticSection,
    pub paths: PathsSection,
    pub segmentation: SegmentationConfig,
    pub architecture: ArchitectureConfig,
    pub pretrain: TrainSection,
    pub train: TrainSection,
    pub inference: InferenceSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthConfig::three_activities(60_000, 0);
        RunConfig {
            seed: 0,
            data: DataSection {
                format: DataFormat::Synthetic,
                inputs: Vec::new(),
                null_labels: Vec::new(),
                vocabulary: Vec::new(),
                test_fraction: 0.2,
                validation_fraction: 0.15,
                labeled_fraction: 1.0,
            },
            synthetic: SyntheticSection {
                total_length: synth.total_length,
                noise_std: synth.noise_std,
                null_probability: synth.null_probability,
                episode_min: synth.episode_min,
                episode_max: synth.episode_max,
            },
            paths: PathsSection {
                prepared: "run/prepared".into(),
                models: "run/models".into(),
                outputs: "run/outputs".into(),
            },
            segmentation: SegmentationConfig::default(),
            // synthetic windows can span all three activities
            architecture: ArchitectureConfig {
                max_cardinality: 3,
                ..ArchitectureConfig::default()
            },
            pretrain: TrainSection::default(),
            train: TrainSection::default(),
            inference: InferenceSection {
                u: None,
                threshold: 0.5,
                calibration_metric: CalibrationMetric::ExactMatch,
                u_grid: default_u_grid(),
            },
        }
    }
}

fn unit_interval(name: &str, v: f64, open_low: bool) -> Result<()> {
    let ok = if open_low { v > 0.0 && v <= 1.0 } else { (0.0..1.0).contains(&v) };
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} out of range: {v}")))
    }
}

impl RunConfig {
    pub fn synth_config(&self) -> SynthConfig {
        let mut s = SynthConfig::three_activities(self.synthetic.total_length, self.seed);
        s.noise_std = self.synthetic.noise_std;
        s.null_probability = self.synthetic.null_probability;
        s.episode_min = self.synthetic.episode_min;
        s.episode_max = self.synthetic.episode_max;
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.segmentation.validate()?;
        self.architecture.validate()?;
        if self.architecture.window != self.segmentation.window {
            return Err(CliError::Config(format!(
                "architecture window {} differs from segmentation window {}",
                self.architecture.window, self.segmentation.window
            )));
        }
        for (phase, t) in [("pretrain", &self.pretrain), ("train", &self.train)] {
            t.to_train_config(Objective::Set, self.seed)
                .validate()
                .map_err(|e| CliError::Config(format!("[{phase}] {e}")))?;
        }
        unit_interval("data.test_fraction", self.data.test_fraction, false)?;
        unit_interval("data.validation_fraction", self.data.validation_fraction, false)?;
        unit_interval("data.labeled_fraction", self.data.labeled_fraction, true)?;
        match self.data.format {
            DataFormat::Synthetic => self.synth_config().validate()?,
            _ if self.data.inputs.is_empty() => {
                return Err(CliError::Config("data.inputs must list at least one file".into()));
            }
            _ => {}
        }
        if let Some(u) = self.inference.u {
            if !(u > 0.0 && u.is_finite()) {
                return Err(CliError::Config(format!("inference.u must be positive, got {u}")));
            }
        }
        if !(self.inference.threshold > 0.0 && self.inference.threshold < 1.0) {
            return Err(CliError::Config("inference.threshold must lie in (0, 1)".into()));
        }
        if self.inference.u_grid.is_empty() || self.inference.u_grid.iter().any(|&u| !(u > 0.0)) {
            return Err(CliError::Config("inference.u_grid must be non-empty and positive".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Defaults, overlaid with `path` (if any), overlaid with the environment.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let file = match path {
            Some(p) => Some(fs::read_to_string(p).map_err(|e| CliError::Io(p.to_path_buf(), e))?),
            None => None,
        };
        Self::from_layers(file.as_deref(), std::env::vars())
    }

    pub fn from_layers(file: Option<&str>, env: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut root = toml::Value::try_from(RunConfig::default()).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(text) = file {
            let overlay: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
            merge(&mut root, toml::Value::Table(overlay));
        }
        let mut vars: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        vars.sort();
        for (key, raw) in vars {
            apply_env(&mut root, &key, &raw)?;
        }
        root.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))
    }
}

fn merge(base: &mut toml::Value, overlay: toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Values parse as TOML (`3`, `1e-3`, `[4, 4]`, `true`); anything else is a string.
fn parse_env_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_env(root: &mut toml::Value, key: &str, raw: &str) -> Result<()> {
    let name = key[ENV_PREFIX.len()..].to_ascii_lowercase();
    let table = root.as_table_mut().expect("config root is a table");
    if table.get(&name).is_some_and(|v| !v.is_table()) {
        table.insert(name, parse_env_value(raw));
        return Ok(());
    }
    let (section, field) = name
        .split_once('_')
        .ok_or_else(|| CliError::Config(format!("{key} does not name a config key")))?;
    let section_table = table
        .get_mut(section)
        .and_then(|s| s.as_table_mut())
        .ok_or_else(|| CliError::Config(format!("{key}: unknown section [{section}]")))?;
    section_table.insert(field.to_string(), parse_env_value(raw));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_env() -> Vec<(String, String)> {
        Vec::new()
    }

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_layers(Some(&text), no_env()).unwrap(), cfg);
        assert_eq!(cfg.train.learning_rate, 1e-4);
        assert_eq!(cfg.train.batch_size, 64);
        assert_eq!(cfg.segmentation.stride, 20);
    }

    #[test]
    fn pinned_u_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.inference.u = Some(2.5);
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_layers(Some(&text), no_env()).unwrap(), cfg);
    }

    #[test]
    fn partial_file_overlays_defaults() {
        let cfg = RunConfig::from_layers(Some("seed = 9\n[train]\nlearning_rate = 0.001\n"), no_env()).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.train.learning_rate, 1e-3);
        assert_eq!(cfg.train.batch_size, 64);
    }

    #[test]
    fn environment_overrides_file() {
        let env = vec![
            ("AUTOSET_TRAIN_BATCH_SIZE".to_string(), "8".to_string()),
            ("AUTOSET_SEED".to_string(), "4".to_string()),
            ("AUTOSET_ARCHITECTURE_CONV_FILTERS".to_string(), "[4, 4]".to_string()),
            ("AUTOSET_DATA_FORMAT".to_string(), "wisdm".to_string()),
            ("AUTOSET_INFERENCE_U".to_string(), "3.4".to_string()),
            ("UNRELATED".to_string(), "x".to_string()),
        ];
        let cfg = RunConfig::from_layers(Some("[train]\nbatch_size = 32\n"), env).unwrap();
        assert_eq!(cfg.train.batch_size, 8);
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.architecture.conv_filters, vec![4, 4]);
        assert_eq!(cfg.data.format, DataFormat::Wisdm);
        assert_eq!(cfg.inference.u, Some(3.4));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_layers(Some("[train]\nlearning_rat = 1\n"), no_env()).is_err());
        let env = vec![("AUTOSET_NOPE_X".to_string(), "1".to_string())];
        assert!(RunConfig::from_layers(None, env).is_err());
    }

    #[test]
    fn validation_catches_inconsistency() {
        let mut cfg = RunConfig::default();
        cfg.segmentation.window = 100;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.data.format = DataFormat::Generic;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.train.lr_decay = 0.0;
        assert!(cfg.validate().is_err());
    }
}
