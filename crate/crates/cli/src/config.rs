//! The run configuration shared by every command.
//!
//! Values come from three layers: built-in defaults, an optional JSON file
//! (`--config`) and command-line flags, later layers winning.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use defocus_core::alignment::{DEFAULT_BINS, DEFAULT_EPSILON};
use defocus_core::analysis::{DEFAULT_MASK_THRESHOLD, DEFAULT_VARIANCE_WINDOW};
use defocus_core::classify::TrainParams;
use defocus_core::defocus::DefocusParams;
use defocus_core::synthcam::{CameraParams, SceneConfig};
use serde::{Deserialize, Serialize};

use crate::UsageError;

/// Version of every JSON document the CLI writes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
    pub out_dir: PathBuf,
    pub defocus: DefocusParams,
    pub camera: CameraParams,
    pub scene: SceneConfig,
    pub corpus: CorpusConfig,
    pub analysis: AnalysisConfig,
    pub alignment: AlignmentConfig,
    pub classify: ClassifyConfig,
    pub timing: TimingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            jobs: 0,
            out_dir: PathBuf::from("out"),
            defocus: DefocusParams::default(),
            camera: CameraParams::default(),
            scene: SceneConfig::default(),
            corpus: CorpusConfig::default(),
            analysis: AnalysisConfig::default(),
            alignment: AlignmentConfig::default(),
            classify: ClassifyConfig::default(),
            timing: TimingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub n_real: usize,
    pub n_fake: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_real: 100,
            n_fake: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub mask_threshold: f64,
    pub sweep_thresholds: Vec<f64>,
    pub variance_window: usize,
    /// Rescale each map to its own [min, max] before comparing.
    pub minmax_normalize: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            mask_threshold: DEFAULT_MASK_THRESHOLD,
            sweep_thresholds: vec![0.1, 0.05, 0.01, 0.005, 0.001, 0.0001],
            variance_window: DEFAULT_VARIANCE_WINDOW,
            minmax_normalize: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentConfig {
    pub n_bins: usize,
    pub epsilon: f64,
    pub pooled: bool,
    /// Map 8-bit saliency PNGs to `value - 0.5` instead of `value`.
    pub png_signed: bool,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            n_bins: DEFAULT_BINS,
            epsilon: DEFAULT_EPSILON,
            pooled: false,
            png_signed: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    pub train: TrainParams,
    /// Scores at or above this are called fake.
    pub threshold: f64,
    /// Seed of the train/validation/test shuffle; the run seed when unset.
    pub split_seed: Option<u64>,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            train: TrainParams::default(),
            threshold: 0.5,
            split_seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingConfig {
    /// Leading items excluded from timing averages.
    pub warmup: usize,
    /// Items averaged by `bench` after the warm-up.
    pub reps: usize,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self { warmup: 5, reps: 30 }
    }
}

impl RunConfig {
    /// Defaults overlaid with the JSON file at `path`, if any.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())).into())
    }

    pub fn split_seed(&self) -> u64 {
        self.classify.split_seed.unwrap_or(self.seed)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let usage = |e: defocus_core::Error| anyhow::Error::from(UsageError(e.to_string()));
        self.defocus.validate().map_err(usage)?;
        self.camera.validate().map_err(usage)?;
        let a = &self.analysis;
        if a.mask_threshold.is_nan() || a.mask_threshold <= 0.0 || a.sweep_thresholds.iter().any(|t| t.is_nan() || *t <= 0.0) {
            return Err(UsageError("analysis thresholds must be positive".into()).into());
        }
        if a.variance_window < 3 || a.variance_window.is_multiple_of(2) {
            return Err(UsageError(format!(
                "variance window must be odd and >= 3, got {}",
                a.variance_window
            ))
            .into());
        }
        if self.alignment.n_bins < 2 || self.alignment.epsilon.is_nan() || self.alignment.epsilon <= 0.0 {
            return Err(UsageError("alignment needs n_bins >= 2 and epsilon > 0".into()).into());
        }
        Ok(())
    }
}
