//! Loss, Adam, the mini-batch training loop and evaluation.

mod adam;

pub use adam::{adam_step, AdamConfig, AdamState};

use std::borrow::Cow;
use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{apply_rotation, draw_rotation, LabeledSample, Manifest};
use crate::features::flatten;
use crate::model::{real, HeadModel, Mode, Real};
use crate::pipeline::Pipeline;
use crate::{Error, Result};

/// Mean squared error and its gradient `2 (pred - target) / N`.
pub fn mse_loss<T: Real>(pred: ArrayView1<T>, target: ArrayView1<T>) -> Result<(T, Array1<T>)> {
    if pred.is_empty() {
        return Err(Error::invalid("loss over an empty batch"));
    }
    if pred.len() != target.len() {
        return Err(Error::invalid(format!(
            "prediction length {} != target length {}",
            pred.len(),
            target.len()
        )));
    }
    let n: T = real(pred.len() as f64);
    let diff = &pred - &target;
    let loss = diff.mapv(|d| d * d).sum() / n;
    let two: T = real(2.0);
    Ok((loss, diff.mapv(|d| two * d / n)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AugmentationMode {
    /// Features precomputed from a grid-augmented manifest.
    GridOffline,
    /// Each epoch draws a fresh rotation per original before extraction.
    RandomOnTheFly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub augmentation: AugmentationMode,
    /// Fraction of training origins held out for per-epoch validation.
    pub val_fraction: f64,
    /// Rotation fill value used by on-the-fly augmentation.
    pub fill: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 32,
            seed: 0,
            augmentation: AugmentationMode::GridOffline,
            val_fraction: 0.1,
            fill: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid(format!(
                "batch_size must be >= 2 because batch normalization needs at least two samples per batch, got {}",
                self.batch_size
            )));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::invalid("val_fraction must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Precomputed features with labels and ancestry.
#[derive(Debug, Clone)]
pub struct TrainSet {
    /// One row per sample.
    pub features: Array2<f32>,
    pub theta_deg: Vec<f64>,
    pub origin_ids: Vec<String>,
}

impl TrainSet {
    pub fn new(features: Array2<f32>, theta_deg: Vec<f64>, origin_ids: Vec<String>) -> Result<Self> {
        if features.nrows() != theta_deg.len() || theta_deg.len() != origin_ids.len() {
            return Err(Error::invalid(format!(
                "{} feature rows, {} labels, {} origin ids",
                features.nrows(),
                theta_deg.len(),
                origin_ids.len()
            )));
        }
        Ok(Self {
            features,
            theta_deg,
            origin_ids,
        })
    }

    pub fn from_manifest(features: Array2<f32>, manifest: &Manifest) -> Result<Self> {
        Self::new(
            features,
            manifest.thetas(),
            manifest.samples.iter().map(|s| s.origin_id.clone()).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.theta_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta_deg.is_empty()
    }
}

pub enum TrainingData<'a> {
    Offline(&'a TrainSet),
    OnTheFly {
        originals: &'a [LabeledSample],
        pipeline: &'a Pipeline,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean squared error in scaled units (degrees / target_scale).
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(["epoch", "train_loss", "val_loss"])?;
        for r in &self.epochs {
            w.write_record([
                r.epoch.to_string(),
                r.train_loss.to_string(),
                r.val_loss.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    /// Mean training loss over the `window` epochs ending at `epoch`
    /// (1-based, inclusive).
    pub fn moving_average(&self, epoch: usize, window: usize) -> Option<f64> {
        if epoch < window || epoch > self.epochs.len() || window == 0 {
            return None;
        }
        let slice = &self.epochs[epoch - window..epoch];
        Some(slice.iter().map(|r| r.train_loss).sum::<f64>() / window as f64)
    }
}

// Independent RNG streams drawn from the one training seed.
const STREAM_VALIDATION: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_DROPOUT: u64 = 3;
const STREAM_AUGMENT: u64 = 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Splits sample indices into (train, validation) by origin.
fn carve_validation(origin_ids: &[String], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut seen = HashSet::new();
    let mut origins: Vec<&str> = origin_ids
        .iter()
        .map(String::as_str)
        .filter(|o| seen.insert(*o))
        .collect();
    let n_val = (fraction * origins.len() as f64).round() as usize;
    let n_val = n_val.min(origins.len().saturating_sub(1));
    origins.shuffle(&mut stream(seed, STREAM_VALIDATION));
    let val: HashSet<&str> = origins[..n_val].iter().copied().collect();
    (0..origin_ids.len()).partition(|&i| !val.contains(origin_ids[i].as_str()))
}

fn scaled_targets(theta: &[f64], idx: &[usize], scale: f64) -> Array1<f32> {
    idx.iter().map(|&i| (theta[i] / scale) as f32).collect()
}

fn check_loss(loss: f32, epoch: usize) -> Result<f64> {
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss in epoch {epoch}")));
    }
    Ok(loss as f64)
}

/// One epoch's features and labels: fixed for offline data, regenerated
/// with fresh random rotations for on-the-fly data.
fn epoch_data<'a>(
    data: &TrainingData<'a>,
    epoch: usize,
    seed: u64,
    fill: f64,
) -> Result<(Cow<'a, Array2<f32>>, Cow<'a, [f64]>)> {
    match data {
        TrainingData::Offline(set) => Ok((Cow::Borrowed(&set.features), Cow::Borrowed(&set.theta_deg))),
        TrainingData::OnTheFly {
            originals,
            pipeline,
        } => {
            let mut rng = stream(seed.wrapping_add(epoch as u64), STREAM_AUGMENT);
            let rotations: Vec<f64> = originals.iter().map(|_| draw_rotation(&mut rng)).collect();
            let augmented = originals
                .iter()
                .zip(&rotations)
                .map(|(s, &rho)| apply_rotation(s, rho, fill))
                .collect::<Result<Vec<_>>>()?;
            let feats = flatten(&pipeline.featurize(&augmented)?);
            let theta = augmented.iter().map(|s| s.theta.value()).collect();
            Ok((Cow::Owned(feats), Cow::Owned(theta)))
        }
    }
}

/// Mini-batch training with Adam on MSE over scaled targets
/// (θ / target_scale). Deterministic for a fixed seed: validation carving,
/// shuffling, dropout and augmentation each draw from their own stream.
/// Trailing batches of one sample are skipped. The model is left in eval
/// mode.
pub fn train(
    data: TrainingData,
    model: &mut HeadModel<f32>,
    tcfg: &TrainConfig,
    acfg: &AdamConfig,
) -> Result<History> {
    tcfg.validate()?;
    acfg.validate()?;
    let origin_ids: Vec<String> = match &data {
        TrainingData::Offline(set) => set.origin_ids.clone(),
        TrainingData::OnTheFly { originals, .. } => {
            originals.iter().map(|s| s.origin_id.clone()).collect()
        }
    };
    if let TrainingData::OnTheFly { originals, .. } = &data {
        if let Some(s) = originals.iter().find(|s| !s.is_original()) {
            return Err(Error::invalid(format!(
                "on-the-fly augmentation expects originals; {} is augmented",
                s.image_id
            )));
        }
    }
    let (train_idx, val_idx) = carve_validation(&origin_ids, tcfg.val_fraction, tcfg.seed);
    if train_idx.len() < 2 * tcfg.batch_size {
        return Err(Error::invalid(format!(
            "insufficient data: {} training samples for batch size {} (need at least {})",
            train_idx.len(),
            tcfg.batch_size,
            2 * tcfg.batch_size
        )));
    }

    let scale = model.target_scale();
    let mut shuffle_rng = stream(tcfg.seed, STREAM_SHUFFLE);
    let mut dropout_rng = stream(tcfg.seed, STREAM_DROPOUT);
    let mut adam = AdamState::for_params(&model.params_mut());
    let mut history = History::default();
    let mut order = train_idx.clone();

    for epoch in 1..=tcfg.epochs {
        let (features, theta) = epoch_data(&data, epoch, tcfg.seed, tcfg.fill)?;
        if features.ncols() != model.input_width() {
            return Err(Error::invalid(format!(
                "feature width {} does not match head input width {}",
                features.ncols(),
                model.input_width()
            )));
        }
        model.set_mode(Mode::Train);
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for batch in order.chunks(tcfg.batch_size) {
            if batch.len() < 2 {
                continue;
            }
            let x = features.select(Axis(0), batch);
            let y = scaled_targets(&theta, batch, scale);
            let pred = model.forward(x.view(), &mut dropout_rng)?;
            let (loss, grad) = mse_loss(pred.view(), y.view())?;
            loss_sum += check_loss(loss, epoch)? * batch.len() as f64;
            seen += batch.len();
            let grads = model.backward(grad.view())?;
            adam_step(&mut model.params_mut(), &grads.slices(), &mut adam, acfg)?;
        }
        model.set_mode(Mode::Eval);
        let val_loss = if val_idx.is_empty() {
            None
        } else {
            let x = features.select(Axis(0), &val_idx);
            let y = scaled_targets(&theta, &val_idx, scale);
            let pred = model.predict(x.view())?;
            let (loss, _) = mse_loss(pred.view(), y.view())?;
            Some(check_loss(loss, epoch)?)
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / seen as f64,
            val_loss,
        });
    }
    if !model.is_finite() {
        return Err(Error::Numeric("training produced non-finite parameters".into()));
    }
    Ok(history)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub image_id: String,
    pub theta_true_deg: f64,
    pub theta_pred_deg: f64,
}

/// Eval-mode predictions in degrees, in manifest order.
pub fn evaluate(
    model: &HeadModel<f32>,
    features: ArrayView2<f32>,
    manifest: &Manifest,
) -> Result<Vec<Prediction>> {
    if manifest.is_empty() {
        return Ok(Vec::new());
    }
    if features.nrows() != manifest.len() {
        return Err(Error::invalid(format!(
            "{} feature rows for {} manifest entries",
            features.nrows(),
            manifest.len()
        )));
    }
    let pred = model.predict_degrees(features)?;
    Ok(manifest
        .samples
        .iter()
        .zip(pred)
        .map(|(s, p)| Prediction {
            image_id: s.image_id.clone(),
            theta_true_deg: s.theta.value(),
            theta_pred_deg: p,
        })
        .collect())
}

pub fn write_predictions(writer: impl Write, preds: &[Prediction]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .has_headers(false)
        .from_writer(writer);
    w.write_record(["image_id", "theta_true_deg", "theta_pred_deg"])?;
    for p in preds {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions(reader: impl std::io::Read) -> Result<Vec<Prediction>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(["image_id", "theta_true_deg", "theta_pred_deg"]) {
        return Err(Error::Manifest(format!(
            "unexpected predictions header {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}
