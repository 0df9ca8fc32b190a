//! Experiment configuration: defaults, validation, and the flat
//! `key = value` config-file format. CLI flags override file values.

use std::path::PathBuf;

use thiserror::Error;

use crate::layer::{GBLayerConfig, GradientMode};
use crate::noise::NoiseSelection;
use crate::replay::ReplayConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("bad value for '{key}': {value}")]
    BadValue { key: String, value: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    Blobs,
    Cifar10,
    Cifar100,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackboneKind {
    Mlp,
    Lenet,
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub dataset: DatasetKind,
    pub data_dir: Option<PathBuf>,
    pub subset_size: usize,
    pub superclasses: Vec<usize>,
    pub backbone: BackboneKind,
    pub gb_enabled: bool,
    pub noise_ratio: f64,
    pub noise_selection: NoiseSelection,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub gb: GBLayerConfig,
    pub replay: ReplayConfig,
    pub blob_classes: usize,
    pub blob_per_class: usize,
    pub blob_test_per_class: usize,
    pub blob_spread: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::Blobs,
            data_dir: None,
            subset_size: 5000,
            superclasses: vec![18, 19],
            backbone: BackboneKind::Mlp,
            gb_enabled: true,
            noise_ratio: 0.0,
            noise_selection: NoiseSelection::Stratified,
            seed: 0,
            epochs: 20,
            batch_size: 128,
            lr: 0.05,
            momentum: 0.9,
            gb: GBLayerConfig::default(),
            replay: ReplayConfig::default(),
            blob_classes: 4,
            blob_per_class: 500,
            blob_test_per_class: 250,
            blob_spread: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..1.0).contains(&self.noise_ratio) {
            return Err(ConfigError::Invalid(format!(
                "noise_ratio {} outside [0,1)",
                self.noise_ratio
            )));
        }
        if !(0.0 < self.gb.cluster.purity_threshold && self.gb.cluster.purity_threshold <= 1.0) {
            return Err(ConfigError::Invalid(format!(
                "purity_threshold {} outside (0,1]",
                self.gb.cluster.purity_threshold
            )));
        }
        if self.batch_size == 0 {
            return Err(ConfigError::Invalid("batch_size must be positive".into()));
        }
        if self.replay.capacity < self.replay.sample_count {
            return Err(ConfigError::Invalid(
                "replay capacity must cover sample_count".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(ConfigError::Invalid(format!(
                "momentum {} outside [0,1)",
                self.momentum
            )));
        }
        if self.dataset != DatasetKind::Blobs && self.data_dir.is_none() {
            return Err(ConfigError::Invalid(
                "image datasets need --data-dir".into(),
            ));
        }
        Ok(())
    }

    /// Apply one `key = value` setting. Keys match the CLI flag names.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = || ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
        };
        match key {
            "dataset" => {
                self.dataset = match value {
                    "blobs" => DatasetKind::Blobs,
                    "cifar10" => DatasetKind::Cifar10,
                    "cifar100" => DatasetKind::Cifar100,
                    _ => return Err(bad()),
                }
            }
            "data_dir" => self.data_dir = Some(PathBuf::from(value)),
            "subset_size" => self.subset_size = value.parse().map_err(|_| bad())?,
            "superclasses" => {
                self.superclasses = value
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(|s| s.trim().parse().map_err(|_| bad()))
                    .collect::<Result<_, _>>()?;
            }
            "backbone" => {
                self.backbone = match value {
                    "mlp" => BackboneKind::Mlp,
                    "lenet" => BackboneKind::Lenet,
                    _ => return Err(bad()),
                }
            }
            "gb" => {
                self.gb_enabled = match value {
                    "on" => true,
                    "off" => false,
                    _ => return Err(bad()),
                }
            }
            "purity" => self.gb.cluster.purity_threshold = value.parse().map_err(|_| bad())?,
            "recluster_rounds" => {
                self.gb.recluster_rounds = value.parse().map_err(|_| bad())?
            }
            "grad_mode" => {
                self.gb.gradient_mode = match value {
                    "copy" => GradientMode::Copy,
                    "mean" => GradientMode::Mean,
                    _ => return Err(bad()),
                }
            }
            "replay_min_size" => self.replay.min_ball_size = value.parse().map_err(|_| bad())?,
            "replay_capacity" => self.replay.capacity = value.parse().map_err(|_| bad())?,
            "replay_sample" => self.replay.sample_count = value.parse().map_err(|_| bad())?,
            "noise_ratio" => self.noise_ratio = value.parse().map_err(|_| bad())?,
            "stratified" => {
                self.noise_selection = match value {
                    "true" => NoiseSelection::Stratified,
                    "false" => NoiseSelection::Uniform,
                    _ => return Err(bad()),
                }
            }
            "epochs" => self.epochs = value.parse().map_err(|_| bad())?,
            "batch_size" => self.batch_size = value.parse().map_err(|_| bad())?,
            "lr" => self.lr = value.parse().map_err(|_| bad())?,
            "momentum" => self.momentum = value.parse().map_err(|_| bad())?,
            "seed" => self.seed = value.parse().map_err(|_| bad())?,
            "blob_classes" => self.blob_classes = value.parse().map_err(|_| bad())?,
            "blob_per_class" => self.blob_per_class = value.parse().map_err(|_| bad())?,
            "blob_test_per_class" => {
                self.blob_test_per_class = value.parse().map_err(|_| bad())?
            }
            "blob_spread" => self.blob_spread = value.parse().map_err(|_| bad())?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Parse a flat config file: one `key = value` per line, `#` comments.
    pub fn apply_file(&mut self, text: &str) -> Result<(), ConfigError> {
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError::Invalid(format!("expected 'key = value', got '{line}'"))
            })?;
            self.apply(key.trim(), value.trim())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_parsing_applies_overrides() {
        let mut cfg = TrainConfig::default();
        cfg.apply_file(
            "# comment\n\
             dataset = blobs\n\
             purity = 0.9\n\
             gb = off\n\
             noise_ratio = 0.3\n\
             seed = 42\n",
        )
        .unwrap();
        assert_eq!(cfg.gb.cluster.purity_threshold, 0.9);
        assert!(!cfg.gb_enabled);
        assert_eq!(cfg.noise_ratio, 0.3);
        assert_eq!(cfg.seed, 42);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_key_rejected() {
        let mut cfg = TrainConfig::default();
        assert!(matches!(
            cfg.apply("warp_speed", "9"),
            Err(ConfigError::UnknownKey(_))
        ));
    }

    #[test]
    fn bad_values_rejected() {
        let mut cfg = TrainConfig::default();
        assert!(cfg.apply("noise_ratio", "lots").is_err());
        assert!(cfg.apply("gb", "maybe").is_err());
    }

    #[test]
    fn validate_catches_bad_ranges() {
        let mut cfg = TrainConfig {
            noise_ratio: 1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.noise_ratio = 0.2;
        cfg.gb.cluster.purity_threshold = 0.0;
        assert!(cfg.validate().is_err());
        cfg.gb.cluster.purity_threshold = 0.8;
        cfg.dataset = DatasetKind::Cifar10;
        assert!(cfg.validate().is_err(), "cifar without data_dir");
    }

    #[test]
    fn superclass_list_parses() {
        let mut cfg = TrainConfig::default();
        cfg.apply("superclasses", "18,19").unwrap();
        assert_eq!(cfg.superclasses, vec![18, 19]);
    }
}
