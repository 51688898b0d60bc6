use serde::{Deserialize, Serialize};

use super::GrayImage;
use crate::{Error, Result};

/// Contrast-limited adaptive histogram equalization settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClaheParams {
    /// Tile grid as (rows, cols).
    pub tiles: (usize, usize),
    /// Per-bin count ceiling as a fraction of the tile's pixel count.
    pub clip_limit: f64,
    pub bins: usize,
}

impl Default for ClaheParams {
    fn default() -> Self {
        Self {
            tiles: (8, 8),
            clip_limit: 0.01,
            bins: 256,
        }
    }
}

/// Per-axis tile layout: pixel ranges and tile centers.
struct Axis {
    bounds: Vec<(usize, usize)>,
    centers: Vec<f64>,
}

impl Axis {
    fn new(len: usize, tiles: usize) -> Self {
        let bounds: Vec<_> = (0..tiles)
            .map(|t| (t * len / tiles, (t + 1) * len / tiles))
            .collect();
        let centers = bounds
            .iter()
            .map(|&(s, e)| (s + e - 1) as f64 / 2.0)
            .collect();
        Self { bounds, centers }
    }

    /// Neighbouring tile indices and the weight of the second one.
    fn locate(&self, pos: f64) -> (usize, usize, f64) {
        let last = self.centers.len() - 1;
        if pos <= self.centers[0] {
            return (0, 0, 0.0);
        }
        if pos >= self.centers[last] {
            return (last, last, 0.0);
        }
        let i = self.centers.partition_point(|&c| c <= pos) - 1;
        let w = (pos - self.centers[i]) / (self.centers[i + 1] - self.centers[i]);
        (i, i + 1, w)
    }
}

#[inline]
fn bin_of(p: f64, bins: usize) -> usize {
    ((p.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1)
}

/// CLAHE on an image already scaled to `[0, 1]`. Each tile's histogram is
/// clipped at `clip_limit * tile_pixels`, the excess spread evenly over all
/// bins, and the cumulative distribution used as the tile's mapping. Each
/// output pixel blends the mappings of the four nearest tile centers.
pub fn clahe(img: &GrayImage, params: &ClaheParams) -> Result<GrayImage> {
    let (tile_rows, tile_cols) = params.tiles;
    if tile_rows == 0 || tile_cols == 0 {
        return Err(Error::invalid("CLAHE tile grid must be at least 1x1"));
    }
    if tile_rows > img.height() || tile_cols > img.width() {
        return Err(Error::invalid(format!(
            "CLAHE tile grid {tile_rows}x{tile_cols} exceeds image {}x{}",
            img.height(),
            img.width()
        )));
    }
    if !(params.clip_limit > 0.0 && params.clip_limit <= 1.0) {
        return Err(Error::invalid(format!(
            "clip_limit must be in (0, 1], got {}",
            params.clip_limit
        )));
    }
    if params.bins < 2 {
        return Err(Error::invalid("CLAHE needs at least 2 bins"));
    }
    let bins = params.bins;
    let rows = Axis::new(img.height(), tile_rows);
    let cols = Axis::new(img.width(), tile_cols);

    let mut maps = vec![vec![0.0f64; bins]; tile_rows * tile_cols];
    for (r, &(y0, y1)) in rows.bounds.iter().enumerate() {
        for (c, &(x0, x1)) in cols.bounds.iter().enumerate() {
            let mut hist = vec![0.0f64; bins];
            for y in y0..y1 {
                for x in x0..x1 {
                    hist[bin_of(img.get(x, y), bins)] += 1.0;
                }
            }
            let n = ((y1 - y0) * (x1 - x0)) as f64;
            let clip = params.clip_limit * n;
            let mut excess = 0.0;
            for h in hist.iter_mut() {
                if *h > clip {
                    excess += *h - clip;
                    *h = clip;
                }
            }
            let bonus = excess / bins as f64;
            let map = &mut maps[r * tile_cols + c];
            let mut acc = 0.0;
            for (m, h) in map.iter_mut().zip(&hist) {
                acc += h + bonus;
                *m = (acc / n).min(1.0);
            }
        }
    }

    let mut out = GrayImage::filled(img.width(), img.height(), 0.0);
    for y in 0..img.height() {
        let (r0, r1, wy) = rows.locate(y as f64);
        for x in 0..img.width() {
            let (c0, c1, wx) = cols.locate(x as f64);
            let b = bin_of(img.get(x, y), bins);
            let m = |r: usize, c: usize| maps[r * tile_cols + c][b];
            let top = (1.0 - wx) * m(r0, c0) + wx * m(r0, c1);
            let bottom = (1.0 - wx) * m(r1, c0) + wx * m(r1, c1);
            out.set(x, y, ((1.0 - wy) * top + wy * bottom).clamp(0.0, 1.0));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Global equalization by direct counting: fraction of pixels whose bin is
    /// at or below the pixel's own bin.
    fn global_equalization(img: &GrayImage, bins: usize) -> Vec<f64> {
        let b: Vec<usize> = img
            .pixels()
            .iter()
            .map(|&p| ((p * bins as f64).floor() as usize).min(bins - 1))
            .collect();
        b.iter()
            .map(|&bi| b.iter().filter(|&&bj| bj <= bi).count() as f64 / b.len() as f64)
            .collect()
    }

    fn single_tile() -> ClaheParams {
        ClaheParams {
            tiles: (1, 1),
            clip_limit: 1.0,
            bins: 256,
        }
    }

    #[test]
    fn constant_stays_constant() {
        let img = GrayImage::filled(20, 16, 0.3);
        let out = clahe(&img, &ClaheParams::default()).unwrap();
        let first = out.pixels()[0];
        assert!(out.pixels().iter().all(|&p| p == first));
    }

    #[test]
    fn two_level_matches_global_equalization() {
        let img = GrayImage::from_fn(16, 8, |x, _| if x < 8 { 0.0 } else { 1.0 });
        let out = clahe(&img, &single_tile()).unwrap();
        let oracle = global_equalization(&img, 256);
        for (a, b) in out.pixels().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(out.get(0, 0), 0.5);
        assert_eq!(out.get(15, 0), 1.0);
    }

    #[test]
    fn output_in_unit_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = GrayImage::new(37, 29, (0..37 * 29).map(|_| rng.random()).collect()).unwrap();
        for tiles in [(1, 1), (3, 5), (8, 8), (29, 37)] {
            let p = ClaheParams {
                tiles,
                clip_limit: 0.02,
                bins: 64,
            };
            let out = clahe(&img, &p).unwrap();
            assert!(out.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn monotone_where_one_tile_governs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let img = GrayImage::new(64, 64, (0..64 * 64).map(|_| rng.random()).collect()).unwrap();
        let p = ClaheParams {
            tiles: (4, 4),
            clip_limit: 1.0,
            bins: 256,
        };
        let out = clahe(&img, &p).unwrap();
        // tile centers sit at 7.5; pixels 0..=7 in both axes use tile (0,0) only
        let mut pairs: Vec<(f64, f64)> = (0..8)
            .flat_map(|y| (0..8).map(move |x| (x, y)))
            .map(|(x, y)| (img.get(x, y), out.get(x, y)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(pairs.windows(2).all(|w| w[0].1 <= w[1].1));
    }

    #[test]
    fn rejects_bad_params() {
        let img = GrayImage::filled(4, 4, 0.5);
        let bad = |tiles, clip_limit| {
            clahe(
                &img,
                &ClaheParams {
                    tiles,
                    clip_limit,
                    bins: 16,
                },
            )
            .is_err()
        };
        assert!(bad((5, 1), 0.5));
        assert!(bad((1, 5), 0.5));
        assert!(bad((0, 1), 0.5));
        assert!(bad((1, 1), 0.0));
        assert!(bad((1, 1), 1.5));
    }
}
