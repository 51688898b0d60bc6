use std::sync::Arc;

use rand::Rng;

use super::{ImageSource, LabeledSample, Manifest};
use crate::geometry::wrap_angle;
use crate::imaging::{rotate, Interpolation};
use crate::{par, Result};

pub const MAX_ROTATION_DEG: f64 = 60.0;
pub const GRID_STEP_DEG: f64 = 5.0;

/// The 25 grid rotations, ascending: -60, -55, ..., 55, 60.
pub fn grid_rotations() -> Vec<f64> {
    let steps = (2.0 * MAX_ROTATION_DEG / GRID_STEP_DEG).round() as i32;
    (0..=steps)
        .map(|k| -MAX_ROTATION_DEG + k as f64 * GRID_STEP_DEG)
        .collect()
}

fn rotated_id(origin_id: &str, rho: f64) -> String {
    if rho.fract() == 0.0 {
        format!("{origin_id}_r{:+03}", rho as i64)
    } else {
        format!("{origin_id}_r{rho:+.4}")
    }
}

/// Rotates an original by `rho` and updates its label to `wrap(θ + ρ)`.
/// A zero rotation returns the sample untouched.
pub fn apply_rotation(sample: &LabeledSample, rho: f64, fill: f64) -> Result<LabeledSample> {
    if !(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG).contains(&rho) {
        return Err(crate::Error::invalid(format!(
            "rotation {rho} outside [-60, 60]"
        )));
    }
    if rho == 0.0 {
        return Ok(sample.clone());
    }
    let img = sample.source.load()?;
    let rotated = rotate(&img, rho, fill, Interpolation::Bilinear);
    Ok(LabeledSample {
        image_id: rotated_id(&sample.origin_id, sample.applied_rotation + rho),
        source: ImageSource::Memory(Arc::new(rotated)),
        theta: wrap_angle(sample.theta.value() + rho)?,
        origin_id: sample.origin_id.clone(),
        applied_rotation: sample.applied_rotation + rho,
    })
}

/// All 25 grid rotations of an original, ascending by rotation; the ρ = 0
/// entry is the original itself.
pub fn augment_grid(sample: &LabeledSample, fill: f64) -> Result<Vec<LabeledSample>> {
    if !sample.is_original() {
        return Err(crate::Error::invalid(format!(
            "{} is already augmented",
            sample.image_id
        )));
    }
    let img = Arc::new(sample.source.load()?);
    let mem = LabeledSample {
        source: ImageSource::Memory(img),
        ..sample.clone()
    };
    grid_rotations()
        .into_iter()
        .map(|rho| {
            if rho == 0.0 {
                Ok(sample.clone())
            } else {
                apply_rotation(&mem, rho, fill)
            }
        })
        .collect()
}

/// Grid-augments every original, in parallel, preserving manifest order.
pub fn augment_grid_all(manifest: &Manifest, fill: f64) -> Result<Manifest> {
    let groups = par::try_map(&manifest.samples, |s| augment_grid(s, fill))?;
    Ok(Manifest {
        samples: groups.into_iter().flatten().collect(),
        seed: manifest.seed,
    })
}

pub fn draw_rotation<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG)
}

/// One random rotation drawn uniformly from [-60, 60].
pub fn augment_random<R: Rng + ?Sized>(
    sample: &LabeledSample,
    rng: &mut R,
    fill: f64,
) -> Result<LabeledSample> {
    let rho = draw_rotation(rng);
    apply_rotation(sample, rho, fill)
}
