//! Flag groups shared between subcommands, with conversions into the core
//! configuration types. Every default is read from the core `Default` impls.

use clap::{Args, ValueEnum};

use anglekit::config::{AugmentConfig, SynthConfig};
use anglekit::dataset::SynthParams;
use anglekit::features::{ExtractorKind, ExtractorSpec};
use anglekit::imaging::{ClaheParams, Preprocess};
use anglekit::metrics::{DEFAULT_BIN_EDGES, MAPE_FLOOR_DEG};
use anglekit::model::HeadConfig;
use anglekit::training::{AdamConfig, AugmentationMode, TrainConfig};

fn pair(v: &[usize], name: &str) -> anyhow::Result<(usize, usize)> {
    match v {
        [a, b] => Ok((*a, *b)),
        _ => Err(crate::UsageError(format!("--{name} takes exactly two values, got {}", v.len())).into()),
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Number of original images to generate
    #[arg(long, default_value_t = SynthConfig::default().count)]
    pub count: usize,
    /// Lower bound of the uniform angle draw, degrees
    #[arg(long, default_value_t = SynthConfig::default().theta_min)]
    pub theta_min: f64,
    /// Upper bound (exclusive) of the uniform angle draw, degrees
    #[arg(long, default_value_t = SynthConfig::default().theta_max)]
    pub theta_max: f64,
    /// Relative lumen width jitter per image, in [0, 1)
    #[arg(long, default_value_t = SynthConfig::default().lumen_jitter)]
    pub lumen_jitter: f64,
    /// Image size as WIDTH,HEIGHT
    #[arg(long, value_delimiter = ',', default_values_t = {
        let (w, h) = SynthParams::default().size;
        [w, h]
    })]
    pub size: Vec<usize>,
    /// Lumen width in pixels; overrides --lumen-fraction
    #[arg(long)]
    pub lumen_width: Option<f64>,
    /// Lumen width as a fraction of the smaller image side
    #[arg(long, default_value_t = SynthParams::default().lumen_fraction)]
    pub lumen_fraction: f64,
    /// Wall band thickness relative to the lumen width
    #[arg(long, default_value_t = SynthParams::default().wall_ratio)]
    pub wall_ratio: f64,
    #[arg(long, default_value_t = SynthParams::default().wall_intensity)]
    pub wall_intensity: f64,
    #[arg(long, default_value_t = SynthParams::default().lumen_intensity)]
    pub lumen_intensity: f64,
    #[arg(long, default_value_t = SynthParams::default().background_intensity)]
    pub background_intensity: f64,
    /// Multiplicative speckle amplitude
    #[arg(long, default_value_t = SynthParams::default().noise_level)]
    pub noise_level: f64,
}

impl SynthArgs {
    pub fn to_config(&self) -> anyhow::Result<SynthConfig> {
        Ok(SynthConfig {
            count: self.count,
            theta_min: self.theta_min,
            theta_max: self.theta_max,
            lumen_jitter: self.lumen_jitter,
            params: SynthParams {
                size: pair(&self.size, "size")?,
                lumen_width: self.lumen_width,
                lumen_fraction: self.lumen_fraction,
                wall_ratio: self.wall_ratio,
                wall_intensity: self.wall_intensity,
                lumen_intensity: self.lumen_intensity,
                background_intensity: self.background_intensity,
                noise_level: self.noise_level,
            },
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct PreprocessArgs {
    /// CLAHE tile grid as ROWS,COLS
    #[arg(long, value_delimiter = ',', default_values_t = {
        let (r, c) = ClaheParams::default().tiles;
        [r, c]
    })]
    pub clahe_tiles: Vec<usize>,
    /// CLAHE clip limit as a fraction of the tile pixel count, in (0, 1]
    #[arg(long, default_value_t = ClaheParams::default().clip_limit)]
    pub clahe_clip: f64,
    /// CLAHE histogram bins
    #[arg(long, default_value_t = ClaheParams::default().bins)]
    pub clahe_bins: usize,
    /// Skip CLAHE (min-max normalization still runs)
    #[arg(long)]
    pub no_clahe: bool,
}

impl PreprocessArgs {
    pub fn to_config(&self) -> anyhow::Result<Preprocess> {
        Ok(Preprocess {
            clahe: ClaheParams {
                tiles: pair(&self.clahe_tiles, "clahe-tiles")?,
                clip_limit: self.clahe_clip,
                bins: self.clahe_bins,
            },
            enable_clahe: !self.no_clahe,
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct ExtractorArgs {
    /// Extractor input size as WIDTH,HEIGHT; images are resampled to it
    #[arg(long, value_delimiter = ',', default_values_t = {
        let (w, h) = ExtractorSpec::default().input_size;
        [w, h]
    })]
    pub input_size: Vec<usize>,
    /// Output channels of each conv stage
    #[arg(long, value_delimiter = ',', default_values_t = ExtractorSpec::default().stages)]
    pub stages: Vec<usize>,
    #[arg(long, default_value_t = ExtractorSpec::default().kernel_size)]
    pub kernel_size: usize,
    /// Seed of the frozen extractor weights
    #[arg(long, default_value_t = ExtractorSpec::default().weight_seed)]
    pub weight_seed: u64,
}

impl ExtractorArgs {
    pub fn to_spec(&self) -> anyhow::Result<ExtractorSpec> {
        Ok(ExtractorSpec {
            kind: ExtractorKind::Builtin,
            input_size: pair(&self.input_size, "input-size")?,
            stages: self.stages.clone(),
            kernel_size: self.kernel_size,
            weight_seed: self.weight_seed,
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct HeadArgs {
    /// Output width of each hidden layer module; the input width comes from the features
    #[arg(long, value_delimiter = ',', default_values_t = HeadConfig::default().widths[1..].to_vec())]
    pub hidden: Vec<usize>,
    /// Dropout probability of each hidden layer module
    #[arg(long, value_delimiter = ',', default_values_t = HeadConfig::default().dropout)]
    pub dropout: Vec<f64>,
    /// Batch normalization running-statistics momentum
    #[arg(long, default_value_t = HeadConfig::default().momentum)]
    pub bn_momentum: f64,
    #[arg(long, default_value_t = HeadConfig::default().epsilon)]
    pub bn_epsilon: f64,
    /// Degrees per unit of network output
    #[arg(long, default_value_t = HeadConfig::default().target_scale)]
    pub target_scale: f64,
}

impl HeadArgs {
    pub fn to_config(&self, input_width: usize, seed: u64) -> HeadConfig {
        let mut widths = vec![input_width];
        widths.extend(&self.hidden);
        HeadConfig {
            widths,
            dropout: self.dropout.clone(),
            momentum: self.bn_momentum,
            epsilon: self.bn_epsilon,
            target_scale: self.target_scale,
            seed,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct AdamArgs {
    /// Adam step size
    #[arg(long, default_value_t = AdamConfig::default().alpha)]
    pub alpha: f64,
    #[arg(long, default_value_t = AdamConfig::default().beta1)]
    pub beta1: f64,
    #[arg(long, default_value_t = AdamConfig::default().beta2)]
    pub beta2: f64,
    #[arg(long, default_value_t = AdamConfig::default().epsilon)]
    pub adam_epsilon: f64,
}

impl AdamArgs {
    pub fn to_config(&self) -> AdamConfig {
        AdamConfig {
            alpha: self.alpha,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.adam_epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AugmentationArg {
    /// Train on precomputed features of a grid-augmented manifest
    GridOffline,
    /// Draw a fresh rotation per original every epoch
    RandomOnTheFly,
}

impl From<AugmentationArg> for AugmentationMode {
    fn from(a: AugmentationArg) -> Self {
        match a {
            AugmentationArg::GridOffline => AugmentationMode::GridOffline,
            AugmentationArg::RandomOnTheFly => AugmentationMode::RandomOnTheFly,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    pub epochs: usize,
    /// Mini-batch size; at least 2 for batch normalization
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    pub batch_size: usize,
    #[arg(long, value_enum, default_value_t = AugmentationArg::GridOffline)]
    pub augmentation: AugmentationArg,
    /// Fraction of training origins held out for per-epoch validation
    #[arg(long, default_value_t = TrainConfig::default().val_fraction)]
    pub val_fraction: f64,
    /// Rotation fill value for on-the-fly augmentation
    #[arg(long, default_value_t = TrainConfig::default().fill)]
    pub fill: f64,
}

impl TrainArgs {
    pub fn to_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            augmentation: self.augmentation.into(),
            val_fraction: self.val_fraction,
            fill: self.fill,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AugmentMode {
    /// All 25 rotations from -60 to 60 degrees in 5 degree steps
    Grid,
    /// Uniform random rotations in [-60, 60] degrees
    Random,
}

pub fn default_fill() -> f64 {
    AugmentConfig::default().fill
}

pub fn default_bin_edges() -> Vec<f64> {
    DEFAULT_BIN_EDGES.to_vec()
}

pub fn default_mape_floor() -> f64 {
    MAPE_FLOOR_DEG
}
