//! Grayscale images and the preprocessing chain applied before feature
//! extraction: min-max normalization, CLAHE, rotation and resampling.

mod clahe;
mod io;
mod transform;

pub use clahe::{clahe, ClaheParams};
pub use io::{decode_pgm, load_image, save_image, save_png, to_png_bytes};
pub use transform::{resize_bilinear, rotate, Interpolation};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Row-major grayscale raster, origin at the top-left pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::invalid(format!(
                "pixel count {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.pixels
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
                (lo.min(p), hi.max(p))
            })
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }
}

/// Maps pixels linearly onto `[0, 1]`. A constant image maps to all zeros.
pub fn normalize_minmax(img: &GrayImage) -> GrayImage {
    let (lo, hi) = img.min_max();
    let range = hi - lo;
    let pixels = if range > 0.0 && range.is_finite() {
        img.pixels.iter().map(|&p| (p - lo) / range).collect()
    } else {
        vec![0.0; img.pixels.len()]
    };
    GrayImage {
        width: img.width,
        height: img.height,
        pixels,
    }
}

/// The fixed preprocessing chain: normalize, CLAHE, then resample to the
/// extractor's input size when it differs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Preprocess {
    pub clahe: ClaheParams,
    /// Skip CLAHE entirely (normalization still runs).
    pub enable_clahe: bool,
}

impl Default for Preprocess {
    fn default() -> Self {
        Self {
            clahe: ClaheParams::default(),
            enable_clahe: true,
        }
    }
}

impl Preprocess {
    pub fn apply(&self, img: &GrayImage, out_size: (usize, usize)) -> Result<GrayImage> {
        let mut out = normalize_minmax(img);
        if self.enable_clahe {
            out = clahe(&out, &self.clahe)?;
        }
        if (out.width, out.height) != out_size {
            out = resize_bilinear(&out, out_size.0, out_size.1)?;
        }
        Ok(out)
    }
}
