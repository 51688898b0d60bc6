//! Doppler angle conventions and velocity math.
//!
//! The Doppler angle is measured between a line drawn parallel to the vessel
//! wall and the image's vertical axis (the beam direction for a linear array).
//! Lines are undirected, so angles live in `[0, 180)`. Image coordinates have
//! x to the right and y down with the origin at the top-left pixel.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Below this |cos θ| the velocity conversion is treated as singular.
pub const COS_FLOOR: f64 = 1e-6;

/// Undirected line angle in degrees, canonically in `[0, 180)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AngleDeg(f64);

impl AngleDeg {
    /// Wraps any finite angle into canonical form.
    pub fn new(raw: f64) -> Result<Self> {
        wrap_angle(raw)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn radians(self) -> f64 {
        self.0.to_radians()
    }
}

impl std::fmt::Display for AngleDeg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// A drawn line in image pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSegment {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl LineSegment {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn swapped(self) -> Self {
        Self::new(self.x2, self.y2, self.x1, self.y1)
    }

    pub fn is_degenerate(&self) -> bool {
        self.x1 == self.x2 && self.y1 == self.y2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DopplerParams {
    /// Transmit frequency, Hz.
    pub f0: f64,
    /// Speed of sound, m/s.
    pub c: f64,
    /// Measured Doppler shift, Hz.
    pub fd: f64,
}

impl DopplerParams {
    pub fn new(fd: f64, f0: f64, c: f64) -> Result<Self> {
        if !(f0 > 0.0 && f0.is_finite()) {
            return Err(Error::invalid(format!("f0 must be positive, got {f0}")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid(format!("c must be positive, got {c}")));
        }
        if !fd.is_finite() {
            return Err(Error::invalid(format!("fd must be finite, got {fd}")));
        }
        Ok(Self { f0, c, fd })
    }
}

pub fn wrap_angle(raw: f64) -> Result<AngleDeg> {
    if !raw.is_finite() {
        return Err(Error::invalid(format!("angle must be finite, got {raw}")));
    }
    let mut w = raw.rem_euclid(180.0);
    // rem_euclid can round up to exactly 180 for tiny negative inputs
    if w >= 180.0 {
        w = 0.0;
    }
    Ok(AngleDeg(w))
}

/// Angle of a segment with respect to the vertical axis, `atan2(dx, dy)`
/// wrapped to `[0, 180)`. Swapping endpoints gives the same angle.
pub fn angle_from_endpoints(seg: &LineSegment) -> Result<AngleDeg> {
    let vals = [seg.x1, seg.y1, seg.x2, seg.y2];
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("segment coordinates must be finite"));
    }
    if seg.is_degenerate() {
        return Err(Error::DegenerateLine {
            x: seg.x1,
            y: seg.y1,
        });
    }
    let dx = seg.x2 - seg.x1;
    let dy = seg.y2 - seg.y1;
    // Orient so dy >= 0 (and dx >= 0 when horizontal): the swapped segment
    // then evaluates the identical atan2 call.
    let (dx, dy) = if dy < 0.0 || (dy == 0.0 && dx < 0.0) {
        (-dx, -dy)
    } else {
        (dx, dy)
    };
    wrap_angle(dx.atan2(dy).to_degrees())
}

fn check_not_singular(theta_deg: f64) -> Result<f64> {
    let c = theta_deg.to_radians().cos();
    if c.abs() <= COS_FLOOR {
        return Err(Error::AngleSingular { theta_deg });
    }
    Ok(c)
}

/// Velocity in m/s from the Doppler equation `fd = 2 f0 v cos θ / c`.
pub fn doppler_velocity(p: &DopplerParams, theta: AngleDeg) -> Result<f64> {
    let cos = check_not_singular(theta.value())?;
    Ok(p.fd * p.c / (2.0 * p.f0 * cos))
}

/// Relative velocity error when `theta_true + delta` is assigned instead of
/// `theta_true`: `cos(theta_true) / cos(theta_true + delta) - 1`.
pub fn velocity_error_factor(theta_true: AngleDeg, delta_deg: f64) -> Result<f64> {
    if !delta_deg.is_finite() {
        return Err(Error::invalid("delta must be finite"));
    }
    let cos_true = check_not_singular(theta_true.value())?;
    let cos_assigned = check_not_singular(theta_true.value() + delta_deg)?;
    Ok(cos_true / cos_assigned - 1.0)
}
