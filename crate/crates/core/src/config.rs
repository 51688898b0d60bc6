//! Every tunable default in one serializable snapshot. Reports embed it so
//! a run can be reproduced from its output alone.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{SynthParams, GRID_STEP_DEG, MAX_ROTATION_DEG};
use crate::features::ExtractorSpec;
use crate::geometry::COS_FLOOR;
use crate::imaging::Preprocess;
use crate::metrics::{DEFAULT_BIN_EDGES, MAPE_FLOOR_DEG};
use crate::model::HeadConfig;
use crate::training::{AdamConfig, TrainConfig};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub count: usize,
    pub theta_min: f64,
    pub theta_max: f64,
    pub lumen_jitter: f64,
    pub params: SynthParams,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            count: 84,
            theta_min: 70.0,
            theta_max: 110.0,
            lumen_jitter: 0.15,
            params: SynthParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub max_rotation_deg: f64,
    pub grid_step_deg: f64,
    /// Value written where a rotation samples outside the source image.
    pub fill: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            max_rotation_deg: MAX_ROTATION_DEG,
            grid_step_deg: GRID_STEP_DEG,
            fill: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub mape_floor_deg: f64,
    pub bin_edges: Vec<f64>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            mape_floor_deg: MAPE_FLOOR_DEG,
            bin_edges: DEFAULT_BIN_EDGES.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub cos_floor: f64,
    pub preprocess: Preprocess,
    pub synth: SynthConfig,
    pub augment: AugmentConfig,
    /// Fraction of originals kept for training; the rest are the test set.
    pub train_fraction: f64,
    pub split_seed: u64,
    pub extractor: ExtractorSpec,
    pub head: HeadConfig,
    pub adam: AdamConfig,
    pub training: TrainConfig,
    pub metrics: MetricsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            cos_floor: COS_FLOOR,
            preprocess: Preprocess::default(),
            synth: SynthConfig::default(),
            augment: AugmentConfig::default(),
            train_fraction: 0.8,
            split_seed: 0,
            extractor: ExtractorSpec::default(),
            head: HeadConfig::default(),
            adam: AdamConfig::default(),
            training: TrainConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
