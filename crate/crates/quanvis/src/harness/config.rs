//! Experiment configuration: one human-editable TOML file describes a whole
//! run; CLI flags override individual fields.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use super::dataset::SyntheticCrackSpec;
use crate::error::{Error, Result};
use crate::nn::{Padding, TrainConfig};
use crate::quanv::QuanvConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    One,
    Two,
}

impl Stage {
    /// The reference patch sizes: 2×2 (4 qubits) in stage one, 4×4
    /// (16 qubits) in stage two.
    pub fn default_patch(self) -> usize {
        match self {
            Stage::One => 2,
            Stage::Two => 4,
        }
    }

    pub fn default_dropout(self) -> f64 {
        match self {
            Stage::One => 0.0,
            Stage::Two => 0.7,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetSource {
    Synthetic,
    Directory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: DatasetSource,
    /// Corpus root for `source = "directory"`.
    pub path: Option<PathBuf>,
    /// Stage 1: held-out test set size.
    pub test_count: usize,
    /// Stage 1: training-input counts to compare (largest first).
    pub train_counts: Vec<usize>,
    /// Stage 2: train fractions to compare.
    pub split_ratios: Vec<f64>,
    /// Seed for the deterministic corpus shuffle before splitting.
    pub shuffle_seed: u64,
    pub synthetic: SyntheticSection,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            source: DatasetSource::Synthetic,
            path: None,
            test_count: 2000,
            train_counts: vec![100, 50],
            split_ratios: vec![0.5, 0.4],
            shuffle_seed: 17,
            synthetic: SyntheticSection::default(),
        }
    }
}

/// Synthetic generator settings plus corpus sizing. Stage 2 generates
/// `count / image_sizes.len()` images per listed resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub count: usize,
    pub image_sizes: Vec<usize>,
    pub crack_probability: f64,
    pub crack_width_px: usize,
    pub crack_waviness: f64,
    pub background_noise_level: f64,
    pub seed: u64,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        let s = SyntheticCrackSpec::default();
        Self {
            count: 2100,
            image_sizes: vec![s.image_size],
            crack_probability: s.crack_probability,
            crack_width_px: s.crack_width_px,
            crack_waviness: s.crack_waviness,
            background_noise_level: s.background_noise_level,
            seed: s.seed,
        }
    }
}

impl SyntheticSection {
    pub fn spec_for_size(&self, image_size: usize, seed: u64) -> SyntheticCrackSpec {
        SyntheticCrackSpec {
            image_size,
            crack_probability: self.crack_probability,
            crack_width_px: self.crack_width_px,
            crack_waviness: self.crack_waviness,
            background_noise_level: self.background_noise_level,
            seed,
        }
    }
}

/// Quanvolution section; patch size and stride default per stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuanvSection {
    pub patch_size: Option<usize>,
    pub stride: Option<usize>,
    pub n_random_layers: Option<usize>,
    pub seed: Option<u64>,
}

impl QuanvSection {
    pub fn resolve(&self, stage: Stage) -> QuanvConfig {
        let patch_size = self.patch_size.unwrap_or(stage.default_patch());
        QuanvConfig {
            patch_size,
            stride: self.stride.unwrap_or(patch_size),
            n_random_layers: self.n_random_layers.unwrap_or(4),
            seed: self.seed.unwrap_or(7),
        }
    }
}

/// Shared architecture settings. Both models get the same classifier head
/// (dense width, dropout); only the convolutional front ends differ, the
/// CNN carrying one extra conv+pool block in place of the quanvolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kernel: usize,
    pub pool: usize,
    pub padding: Padding,
    pub dense_units: usize,
    /// Defaults per stage: 0.0 in stage one, 0.7 in stage two.
    pub dropout: Option<f64>,
    pub qnn_conv_filters: Vec<usize>,
    pub cnn_conv_filters: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kernel: 4,
            pool: 2,
            padding: Padding::Same,
            dense_units: 32,
            dropout: None,
            qnn_conv_filters: vec![32],
            cnn_conv_filters: vec![32, 16],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImagingConfig {
    /// Category table path (`height,width,target,weight` rows). When absent
    /// a table is derived from the corpus resolutions.
    pub categories: Option<PathBuf>,
    pub positive_threshold: f64,
    pub allow_fallback: bool,
}

impl Default for ImagingConfig {
    fn default() -> Self {
        Self {
            categories: None,
            positive_threshold: 0.01,
            allow_fallback: true,
        }
    }
}

/// Everything a stage run needs; see `quanvis stage1 --help` for the
/// override flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub stage: Stage,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub quanv: QuanvSection,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub imaging: ImagingConfig,
}

fn default_seeds() -> Vec<u64> {
    vec![7]
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Input(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        let quanv = self.quanv.resolve(self.stage);
        quanv.validate()?;
        if quanv.patch_size != self.stage.default_patch() {
            log::warn!(
                "stage {:?} normally uses patch size {}, configured {}",
                self.stage,
                self.stage.default_patch(),
                quanv.patch_size
            );
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        match self.stage {
            Stage::One => {
                if self.dataset.train_counts.is_empty() {
                    return Err(Error::Config("train_counts must not be empty".into()));
                }
                if self.dataset.test_count == 0 {
                    return Err(Error::Config("test_count must be positive".into()));
                }
            }
            Stage::Two => {
                if self.dataset.split_ratios.is_empty() {
                    return Err(Error::Config("split_ratios must not be empty".into()));
                }
                if self
                    .dataset
                    .split_ratios
                    .iter()
                    .any(|r| !(0.0 < *r && *r < 1.0))
                {
                    return Err(Error::Config("split ratios must lie in (0, 1)".into()));
                }
            }
        }
        if self.dataset.source == DatasetSource::Directory && self.dataset.path.is_none() {
            return Err(Error::Config(
                "dataset.path is required for source = \"directory\"".into(),
            ));
        }
        if !(0.0 < self.imaging.positive_threshold && self.imaging.positive_threshold <= 1.0) {
            return Err(Error::Config(
                "imaging.positive_threshold must lie in (0, 1]".into(),
            ));
        }
        if let Some(rate) = self.model.dropout {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::Config("model.dropout must lie in [0, 1)".into()));
            }
        }
        if self.model.qnn_conv_filters.is_empty() || self.model.cnn_conv_filters.is_empty() {
            return Err(Error::Config("conv filter lists must not be empty".into()));
        }
        Ok(())
    }

    /// The cache directory after applying the override chain:
    /// flag (handled by the CLI) > `QUANVIS_CACHE_DIR` > config > default.
    pub fn effective_cache_dir(&self) -> PathBuf {
        if let Ok(dir) = std::env::var("QUANVIS_CACHE_DIR") {
            if !dir.is_empty() {
                return PathBuf::from(dir);
            }
        }
        self.cache_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(".quanvis-cache"))
    }

    pub fn resolved_quanv(&self) -> QuanvConfig {
        self.quanv.resolve(self.stage)
    }

    pub fn resolved_dropout(&self) -> f64 {
        self.model.dropout.unwrap_or(self.stage.default_dropout())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let config: ExperimentConfig = toml::from_str(
            r#"
            stage = "one"
            output_dir = "runs/demo"
            "#,
        )
        .unwrap();
        config.validate().unwrap();
        assert_eq!(config.resolved_quanv().patch_size, 2);
        assert_eq!(config.resolved_quanv().n_qubits(), 4);
        assert_eq!(config.resolved_dropout(), 0.0);
        assert_eq!(config.train.epochs, 50);
        assert_eq!(config.dataset.train_counts, vec![100, 50]);
    }

    #[test]
    fn stage_two_defaults() {
        let config: ExperimentConfig = toml::from_str(
            r#"
            stage = "two"
            output_dir = "runs/demo2"
            [dataset.synthetic]
            count = 18
            image_sizes = [108, 126, 144]
            "#,
        )
        .unwrap();
        config.validate().unwrap();
        assert_eq!(config.resolved_quanv().patch_size, 4);
        assert_eq!(config.resolved_quanv().n_qubits(), 16);
        assert_eq!(config.resolved_dropout(), 0.7);
    }

    #[test]
    fn unknown_fields_are_config_errors() {
        let parsed: std::result::Result<ExperimentConfig, _> = toml::from_str(
            r#"
            stage = "one"
            output_dir = "x"
            banana = 3
            "#,
        );
        assert!(parsed.is_err());
    }

    #[test]
    fn directory_source_requires_path() {
        let config: ExperimentConfig = toml::from_str(
            r#"
            stage = "one"
            output_dir = "x"
            [dataset]
            source = "directory"
            "#,
        )
        .unwrap();
        assert!(matches!(config.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn round_trips_through_toml() {
        let config: ExperimentConfig = toml::from_str(
            r#"
            stage = "one"
            output_dir = "runs/demo"
            seeds = [1, 2, 3]
            [train]
            epochs = 5
            "#,
        )
        .unwrap();
        let text = toml::to_string(&config).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(config, back);
    }
}
