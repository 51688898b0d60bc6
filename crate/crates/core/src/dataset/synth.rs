//! Synthetic B-mode-like vessel images with known Doppler angles, and the
//! intensity-moment orientation estimate used to check them.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ImageSource, LabeledSample};
use crate::geometry::{wrap_angle, AngleDeg};
use crate::imaging::GrayImage;
use crate::{par, Error, Result};

/// Pixels brighter than this count as vessel wall for the orientation oracle.
pub const WALL_THRESHOLD: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    /// (width, height) in pixels.
    pub size: (usize, usize),
    /// Lumen width in pixels; `None` means `lumen_fraction * min(w, h)`.
    pub lumen_width: Option<f64>,
    pub lumen_fraction: f64,
    /// Wall band thickness relative to the lumen width.
    pub wall_ratio: f64,
    pub wall_intensity: f64,
    pub lumen_intensity: f64,
    pub background_intensity: f64,
    /// Multiplicative speckle amplitude: `p * (1 + noise_level * n)`, n ~ N(0, 1).
    pub noise_level: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            size: (128, 128),
            lumen_width: None,
            lumen_fraction: 0.18,
            wall_ratio: 0.5,
            wall_intensity: 0.9,
            lumen_intensity: 0.1,
            background_intensity: 0.45,
            noise_level: 0.1,
        }
    }
}

impl SynthParams {
    pub fn resolved_lumen_width(&self) -> f64 {
        self.lumen_width
            .unwrap_or(self.lumen_fraction * self.size.0.min(self.size.1) as f64)
    }
}

/// Coverage of a 1-pixel-wide linear ramp; antialiases band edges.
#[inline]
fn coverage(t: f64) -> f64 {
    (t + 0.5).clamp(0.0, 1.0)
}

/// Renders a vessel through the image center at `theta`: a dark lumen
/// flanked by two bright wall bands on a mid-gray background, then speckle.
pub fn synth_vessel(
    image_id: &str,
    theta: AngleDeg,
    params: &SynthParams,
    seed: u64,
) -> Result<LabeledSample> {
    let (w, h) = params.size;
    if w < 4 || h < 4 {
        return Err(Error::invalid(format!("image {w}x{h} too small")));
    }
    let lumen = params.resolved_lumen_width();
    let diagonal = ((w * w + h * h) as f64).sqrt();
    if !(lumen > 0.0) || lumen > diagonal {
        return Err(Error::invalid(format!(
            "lumen width {lumen} must be positive and fit the image diagonal {diagonal:.1}"
        )));
    }
    if !(params.noise_level >= 0.0) {
        return Err(Error::invalid("noise_level must be non-negative"));
    }
    let half_lumen = lumen / 2.0;
    let outer = half_lumen + params.wall_ratio * lumen;
    let (sin_t, cos_t) = theta.radians().sin_cos();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let bg = params.background_intensity;
    let wall = params.wall_intensity;
    let lum = params.lumen_intensity;

    let mut img = GrayImage::from_fn(w, h, |x, y| {
        // distance from the axis through the center along (sin θ, cos θ)
        let d = ((x as f64 - cx) * cos_t - (y as f64 - cy) * sin_t).abs();
        bg + (wall - bg) * coverage(outer - d) + (lum - wall) * coverage(half_lumen - d)
    });
    if params.noise_level > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in img.pixels_mut() {
            let n: f64 = rng.sample(StandardNormal);
            *p = (*p * (1.0 + params.noise_level * n)).clamp(0.0, 1.0);
        }
    }
    Ok(LabeledSample::original(
        image_id,
        ImageSource::Memory(Arc::new(img)),
        theta,
    ))
}

/// A seeded set of synthetic originals with angles uniform in
/// `theta_range` and lumen widths jittered by up to `±lumen_jitter`
/// (relative). Generation is parallel; output is seed-determined.
pub fn synth_dataset(
    count: usize,
    params: &SynthParams,
    theta_range: (f64, f64),
    lumen_jitter: f64,
    seed: u64,
) -> Result<Vec<LabeledSample>> {
    let (lo, hi) = theta_range;
    if !(0.0..180.0).contains(&lo) || !(lo < hi && hi <= 180.0) {
        return Err(Error::invalid(format!(
            "theta range [{lo}, {hi}) must lie within [0, 180)"
        )));
    }
    if !(0.0..1.0).contains(&lumen_jitter) {
        return Err(Error::invalid("lumen_jitter must be in [0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<(f64, f64, u64)> = (0..count)
        .map(|_| {
            let theta = rng.random_range(lo..hi);
            let jitter = if lumen_jitter > 0.0 {
                rng.random_range(-lumen_jitter..=lumen_jitter)
            } else {
                0.0
            };
            (theta, jitter, rng.random::<u64>())
        })
        .collect();
    let base_lumen = params.resolved_lumen_width();
    let width = count.max(1).to_string().len().max(4);
    par::map_range(count, |i| {
        let (theta, jitter, noise_seed) = draws[i];
        let p = SynthParams {
            lumen_width: Some(base_lumen * (1.0 + jitter)),
            ..*params
        };
        synth_vessel(&format!("syn_{i:0width$}"), wrap_angle(theta)?, &p, noise_seed)
    })
    .into_iter()
    .collect()
}

/// Orientation of the bright (wall) structure: principal axis of the
/// intensity-weighted second central moments of pixels above `threshold`,
/// restricted to a disc about the image center (default radius
/// `min(w, h)/2 - 2`) so image borders and rotation corners cannot bias it.
/// Returned in the Doppler convention (angle from vertical, `[0, 180)`).
pub fn principal_axis_angle(
    img: &GrayImage,
    threshold: f64,
    radius: Option<f64>,
) -> Result<AngleDeg> {
    let cx = (img.width() as f64 - 1.0) / 2.0;
    let cy = (img.height() as f64 - 1.0) / 2.0;
    let r = radius.unwrap_or(img.width().min(img.height()) as f64 / 2.0 - 2.0);
    let r2 = r * r;
    let mut pts = Vec::new();
    for y in 0..img.height() {
        for x in 0..img.width() {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let v = img.get(x, y);
            if dx * dx + dy * dy <= r2 && v > threshold {
                pts.push((dx, dy, v));
            }
        }
    }
    let mass: f64 = pts.iter().map(|p| p.2).sum();
    if pts.len() < 3 || mass <= 0.0 {
        return Err(Error::invalid("no structure above threshold"));
    }
    let mx = pts.iter().map(|p| p.0 * p.2).sum::<f64>() / mass;
    let my = pts.iter().map(|p| p.1 * p.2).sum::<f64>() / mass;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y, v) in &pts {
        let (ux, uy) = (x - mx, y - my);
        sxx += v * ux * ux;
        syy += v * uy * uy;
        sxy += v * ux * uy;
    }
    // major axis angle from the +x axis, then re-expressed from vertical
    let phi = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let (s, c) = phi.sin_cos();
    wrap_angle(c.atan2(s).to_degrees())
}
