//! Labeled samples, manifests, the train/test split, rotation augmentation
//! and the synthetic vessel generator.

mod augment;
mod labels;
mod synth;

pub use augment::{
    apply_rotation, augment_grid, augment_grid_all, augment_random, draw_rotation, grid_rotations,
    GRID_STEP_DEG, MAX_ROTATION_DEG,
};
pub use labels::{read_labels, write_labels, LabelRecord};
pub use synth::{
    principal_axis_angle, synth_dataset, synth_vessel, SynthParams, WALL_THRESHOLD,
};

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, AngleDeg};
use crate::imaging::{load_image, GrayImage};
use crate::{Error, Result};

/// Where a sample's pixels live.
#[derive(Debug, Clone, PartialEq)]
pub enum ImageSource {
    Path(PathBuf),
    Memory(Arc<GrayImage>),
}

impl ImageSource {
    pub fn load(&self) -> Result<GrayImage> {
        match self {
            ImageSource::Path(p) => load_image(p),
            ImageSource::Memory(img) => Ok((**img).clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub image_id: String,
    pub source: ImageSource,
    pub theta: AngleDeg,
    /// Id of the unaugmented ancestor; equals `image_id` for originals.
    pub origin_id: String,
    /// Rotation applied to the ancestor, degrees in `[-60, 60]`.
    pub applied_rotation: f64,
}

impl LabeledSample {
    pub fn original(image_id: impl Into<String>, source: ImageSource, theta: AngleDeg) -> Self {
        let image_id = image_id.into();
        Self {
            origin_id: image_id.clone(),
            image_id,
            source,
            theta,
            applied_rotation: 0.0,
        }
    }

    pub fn is_original(&self) -> bool {
        self.applied_rotation == 0.0 && self.image_id == self.origin_id
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub samples: Vec<LabeledSample>,
    pub seed: Option<u64>,
}

/// One CSV row of a manifest file.
#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    image_id: String,
    path: String,
    theta_deg: f64,
    origin_id: String,
    applied_rotation_deg: f64,
}

impl Manifest {
    pub fn new(samples: Vec<LabeledSample>) -> Result<Self> {
        let m = Self {
            samples,
            seed: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.samples.len());
        for s in &self.samples {
            if !seen.insert(s.image_id.as_str()) {
                return Err(Error::Manifest(format!("duplicate image_id {}", s.image_id)));
            }
            if !(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG).contains(&s.applied_rotation) {
                return Err(Error::Manifest(format!(
                    "{}: applied rotation {} outside [-60, 60]",
                    s.image_id, s.applied_rotation
                )));
            }
        }
        Ok(())
    }

    pub fn thetas(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.theta.value()).collect()
    }

    /// Reads a manifest CSV. Relative paths resolve against the file's
    /// directory.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        Self::read_from(file, &base)
    }

    pub fn read_from(reader: impl Read, base: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let expected = ["image_id", "path", "theta_deg", "origin_id", "applied_rotation_deg"];
        let headers = rdr.headers()?.clone();
        if headers.iter().ne(expected) {
            return Err(Error::Manifest(format!(
                "unexpected manifest header {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        }
        let mut samples = Vec::new();
        for row in rdr.deserialize() {
            let row: ManifestRow = row?;
            let p = PathBuf::from(&row.path);
            let p = if p.is_absolute() { p } else { base.join(p) };
            samples.push(LabeledSample {
                image_id: row.image_id,
                source: ImageSource::Path(p),
                theta: wrap_angle(row.theta_deg)?,
                origin_id: row.origin_id,
                applied_rotation: row.applied_rotation_deg,
            });
        }
        Self::new(samples)
    }

    /// Writes the manifest. Every sample must be file-backed; paths are
    /// written relative to `base` where one exists.
    pub fn write_to(&self, writer: impl Write, base: &Path) -> Result<()> {
        let base_abs = std::path::absolute(base)?;
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        for s in &self.samples {
            let ImageSource::Path(p) = &s.source else {
                return Err(Error::Manifest(format!(
                    "{} has no file path; save images before writing the manifest",
                    s.image_id
                )));
            };
            let abs = std::path::absolute(p)?;
            let rel = pathdiff::diff_paths(&abs, &base_abs).unwrap_or(abs);
            w.serialize(ManifestRow {
                image_id: s.image_id.clone(),
                path: rel.to_string_lossy().into_owned(),
                theta_deg: s.theta.value(),
                origin_id: s.origin_id.clone(),
                applied_rotation_deg: s.applied_rotation,
            })?;
        }
        if self.samples.is_empty() {
            w.write_record(["image_id", "path", "theta_deg", "origin_id", "applied_rotation_deg"])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file), &base)
    }

    /// Builds a manifest of originals from an annotation label file; images
    /// are looked up as `<image_id>.png` or `<image_id>.pgm` in `image_dir`.
    pub fn from_labels(labels: &[LabelRecord], image_dir: &Path) -> Result<Self> {
        let samples = labels
            .iter()
            .map(|l| {
                let path = ["png", "pgm"]
                    .iter()
                    .map(|ext| image_dir.join(format!("{}.{ext}", l.image_id)))
                    .find(|p| p.exists())
                    .ok_or_else(|| {
                        Error::Manifest(format!(
                            "no image for {} in {}",
                            l.image_id,
                            image_dir.display()
                        ))
                    })?;
                Ok(LabeledSample::original(
                    l.image_id.clone(),
                    ImageSource::Path(path),
                    wrap_angle(l.theta_deg)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(samples)
    }

    /// Distinct origin ids in first-appearance order.
    pub fn origin_ids(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.samples
            .iter()
            .filter(|s| seen.insert(s.origin_id.as_str()))
            .map(|s| s.origin_id.clone())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "train_fraction must be in (0, 1), got {train_fraction}"
            )));
        }
        Ok(Self {
            train_fraction,
            seed,
        })
    }
}

/// Seeded selection of `round(fraction * n)` of `n` indices without
/// replacement; returns a membership mask.
fn choose_train(n: usize, spec: &SplitSpec) -> Vec<bool> {
    let n_train = (spec.train_fraction * n as f64).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    idx.shuffle(&mut rng);
    let mut mask = vec![false; n];
    for &i in &idx[..n_train] {
        mask[i] = true;
    }
    mask
}

/// Partitions a manifest of originals into train and test buckets. Both
/// keep the input order.
pub fn split(manifest: &Manifest, spec: &SplitSpec) -> Result<(Manifest, Manifest)> {
    SplitSpec::new(spec.train_fraction, spec.seed)?;
    if manifest.is_empty() {
        return Err(Error::invalid("cannot split an empty manifest"));
    }
    if let Some(s) = manifest.samples.iter().find(|s| !s.is_original()) {
        return Err(Error::invalid(format!(
            "split expects originals only; {} is augmented",
            s.image_id
        )));
    }
    let mask = choose_train(manifest.len(), spec);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (s, is_train) in manifest.samples.iter().zip(mask) {
        if is_train {
            train.push(s.clone());
        } else {
            test.push(s.clone());
        }
    }
    Ok((
        Manifest {
            samples: train,
            seed: Some(spec.seed),
        },
        Manifest {
            samples: test,
            seed: Some(spec.seed),
        },
    ))
}

/// Splits an augmented manifest by ancestor: originals are split as in
/// [`split`] and each descendant follows its ancestor, so no rotated copy of
/// a test image reaches training.
pub fn split_by_origin(manifest: &Manifest, spec: &SplitSpec) -> Result<(Manifest, Manifest)> {
    SplitSpec::new(spec.train_fraction, spec.seed)?;
    let origins = manifest.origin_ids();
    if origins.is_empty() {
        return Err(Error::invalid("cannot split an empty manifest"));
    }
    let mask = choose_train(origins.len(), spec);
    let train_origins: HashSet<&str> = origins
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|(o, _)| o.as_str())
        .collect();
    let (train, test): (Vec<_>, Vec<_>) = manifest
        .samples
        .iter()
        .cloned()
        .partition(|s| train_origins.contains(s.origin_id.as_str()));
    Ok((
        Manifest {
            samples: train,
            seed: Some(spec.seed),
        },
        Manifest {
            samples: test,
            seed: Some(spec.seed),
        },
    ))
}
