use serde::{Deserialize, Serialize};

use super::GrayImage;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    #[default]
    Bilinear,
    Nearest,
}

/// Bilinear sample at a fractional position; `fill` outside the raster.
/// Positions within half a pixel of the border are clamped onto it.
#[inline]
fn sample_bilinear(img: &GrayImage, sx: f64, sy: f64, fill: f64) -> f64 {
    let w = img.width() as f64;
    let h = img.height() as f64;
    if sx < -0.5 || sy < -0.5 || sx > w - 0.5 || sy > h - 0.5 {
        return fill;
    }
    let sx = sx.clamp(0.0, w - 1.0);
    let sy = sy.clamp(0.0, h - 1.0);
    let x0 = sx.floor() as usize;
    let y0 = sy.floor() as usize;
    let x1 = (x0 + 1).min(img.width() - 1);
    let y1 = (y0 + 1).min(img.height() - 1);
    let fx = sx - x0 as f64;
    let fy = sy - y0 as f64;
    let top = img.get(x0, y0) * (1.0 - fx) + img.get(x1, y0) * fx;
    let bottom = img.get(x0, y1) * (1.0 - fx) + img.get(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

#[inline]
fn sample_nearest(img: &GrayImage, sx: f64, sy: f64, fill: f64) -> f64 {
    let x = sx.round();
    let y = sy.round();
    if x < 0.0 || y < 0.0 || x >= img.width() as f64 || y >= img.height() as f64 {
        return fill;
    }
    img.get(x as usize, y as usize)
}

/// Rotates about the pixel-grid center `((w-1)/2, (h-1)/2)`, keeping the
/// output size. Positive `rho_deg` carries a line at angle θ (measured from
/// the vertical axis) to θ + ρ. Out-of-bounds source samples take `fill`.
pub fn rotate(img: &GrayImage, rho_deg: f64, fill: f64, interp: Interpolation) -> GrayImage {
    if rho_deg == 0.0 {
        return img.clone();
    }
    let (s, c) = rho_deg.to_radians().sin_cos();
    let cx = (img.width() as f64 - 1.0) / 2.0;
    let cy = (img.height() as f64 - 1.0) / 2.0;
    // Forward map on a direction (sin θ, cos θ) is [[c, s], [-s, c]]; each
    // output pixel pulls from the transpose.
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        let sx = cx + c * dx - s * dy;
        let sy = cy + s * dx + c * dy;
        match interp {
            Interpolation::Bilinear => sample_bilinear(img, sx, sy, fill),
            Interpolation::Nearest => sample_nearest(img, sx, sy, fill),
        }
    })
}

/// Bilinear resampling with half-pixel centers; edge pixels are clamped.
pub fn resize_bilinear(img: &GrayImage, out_w: usize, out_h: usize) -> Result<GrayImage> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::invalid(format!(
            "resize target must be positive, got {out_w}x{out_h}"
        )));
    }
    if out_w == img.width() && out_h == img.height() {
        return Ok(img.clone());
    }
    let scale_x = img.width() as f64 / out_w as f64;
    let scale_y = img.height() as f64 / out_h as f64;
    let max_x = img.width() as f64 - 1.0;
    let max_y = img.height() as f64 - 1.0;
    Ok(GrayImage::from_fn(out_w, out_h, |x, y| {
        let sx = ((x as f64 + 0.5) * scale_x - 0.5).clamp(0.0, max_x);
        let sy = ((y as f64 + 0.5) * scale_y - 0.5).clamp(0.0, max_y);
        sample_bilinear(img, sx, sy, 0.0)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayImage::new(w, h, (0..w * h).map(|_| rng.random()).collect()).unwrap()
    }

    #[test]
    fn zero_rotation_is_identity() {
        let img = random_image(13, 9, 1);
        assert_eq!(rotate(&img, 0.0, 0.0, Interpolation::Bilinear), img);
    }

    #[test]
    fn quarter_turn_nearest_is_index_permutation() {
        let n = 11;
        let img = random_image(n, n, 2);
        let out = rotate(&img, 90.0, -1.0, Interpolation::Nearest);
        // transpose, then flip top-to-bottom
        for y in 0..n {
            for x in 0..n {
                assert_eq!(out.get(x, y), img.get(n - 1 - y, x));
            }
        }
        // even side lengths put the center between pixels; still exact
        let m = 8;
        let img = random_image(m, m, 3);
        let out = rotate(&img, 90.0, -1.0, Interpolation::Nearest);
        for y in 0..m {
            for x in 0..m {
                assert_eq!(out.get(x, y), img.get(m - 1 - y, x));
            }
        }
    }

    #[test]
    fn corners_take_fill() {
        let img = GrayImage::filled(20, 20, 0.5);
        let out = rotate(&img, 45.0, 0.0, Interpolation::Bilinear);
        assert_eq!(out.get(0, 0), 0.0);
        assert_eq!(out.get(10, 10), 0.5);
    }

    #[test]
    fn resize_examples() {
        let img = random_image(7, 5, 4);
        let same = resize_bilinear(&img, 7, 5).unwrap();
        for (a, b) in same.pixels().iter().zip(img.pixels()) {
            assert!((a - b).abs() < 1e-6);
        }

        let flat = GrayImage::filled(6, 4, 0.42);
        let r = resize_bilinear(&flat, 17, 3).unwrap();
        assert!(r.pixels().iter().all(|&p| (p - 0.42).abs() < 1e-12));

        let ramp = GrayImage::new(2, 1, vec![0.0, 1.0]).unwrap();
        let r = resize_bilinear(&ramp, 4, 1).unwrap();
        assert_eq!(r.pixels(), &[0.0, 0.25, 0.75, 1.0]);

        assert!(resize_bilinear(&img, 0, 3).is_err());
    }

    #[test]
    fn resize_stays_within_input_range() {
        let img = random_image(9, 11, 5);
        let (lo, hi) = img.min_max();
        let r = resize_bilinear(&img, 23, 4).unwrap();
        assert!(r.pixels().iter().all(|&p| p >= lo - 1e-12 && p <= hi + 1e-12));
    }

    #[test]
    fn no_nan_from_any_op() {
        let img = random_image(16, 12, 6);
        for rho in [-180.0, -37.5, 12.0, 60.0, 180.0] {
            let r = rotate(&img, rho, 0.0, Interpolation::Bilinear);
            assert_eq!((r.width(), r.height()), (16, 12));
            assert!(r.pixels().iter().all(|p| p.is_finite()));
        }
    }
}
