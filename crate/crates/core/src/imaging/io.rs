use std::path::Path;

use image::{ColorType, ImageReader};

use super::GrayImage;
use crate::{Error, Result};

/// Loads an 8-bit grayscale PNG or binary PGM (P5, maxval 255), scaling
/// bytes by 1/255.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::ingestion(path, e.to_string()))?;
    if bytes.starts_with(b"P5") {
        return decode_pgm(&bytes).map_err(|reason| Error::ingestion(path, reason));
    }
    if bytes.starts_with(b"\x89PNG") {
        return decode_png(&bytes).map_err(|reason| Error::ingestion(path, reason));
    }
    if bytes.len() >= 2 && bytes[0] == b'P' && bytes[1].is_ascii_digit() {
        return Err(Error::ingestion(
            path,
            format!(
                "unsupported netpbm variant P{}; only binary P5 is accepted",
                bytes[1] as char
            ),
        ));
    }
    Err(Error::ingestion(
        path,
        "unsupported format: expected 8-bit grayscale PNG or PGM (P5)",
    ))
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage, String> {
    let reader = ImageReader::with_format(std::io::Cursor::new(bytes), image::ImageFormat::Png);
    let img = reader.decode().map_err(|e| format!("PNG decode failed: {e}"))?;
    match img.color() {
        ColorType::L8 => {}
        other => {
            return Err(format!(
                "PNG is {other:?}; only 8-bit grayscale is accepted"
            ))
        }
    }
    let luma = img.into_luma8();
    let (w, h) = luma.dimensions();
    let pixels = luma.into_raw().into_iter().map(byte_to_unit).collect();
    GrayImage::new(w as usize, h as usize, pixels).map_err(|e| e.to_string())
}

#[inline]
fn byte_to_unit(b: u8) -> f64 {
    b as f64 / 255.0
}

/// Parses a binary PGM. Header tokens are whitespace separated; `#` starts a
/// comment running to end of line. Exactly one whitespace byte separates the
/// maxval from the raster.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, String> {
    let mut pos = 0usize;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        // skip whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => return Err("truncated PGM header".into()),
            }
        }
        let start = pos;
        while let Some(b) = bytes.get(pos) {
            if b.is_ascii_whitespace() || *b == b'#' {
                break;
            }
            pos += 1;
        }
        tokens.push(&bytes[start..pos]);
    }
    if tokens[0] != b"P5" {
        return Err("bad PGM magic".into());
    }
    let num = |t: &[u8], what: &str| -> Result<usize, String> {
        std::str::from_utf8(t)
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| format!("invalid PGM {what}"))
    };
    let width = num(tokens[1], "width")?;
    let height = num(tokens[2], "height")?;
    let maxval = num(tokens[3], "maxval")?;
    if maxval != 255 {
        return Err(format!("PGM maxval {maxval} unsupported; expected 255"));
    }
    if width == 0 || height == 0 {
        return Err("PGM has zero dimension".into());
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err("truncated PGM header".into()),
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| "PGM dimensions overflow".to_string())?;
    let raster = &bytes[pos..];
    if raster.len() < n {
        return Err(format!(
            "truncated PGM raster: expected {n} bytes, found {}",
            raster.len()
        ));
    }
    let pixels = raster[..n].iter().copied().map(byte_to_unit).collect();
    GrayImage::new(width, height, pixels).map_err(|e| e.to_string())
}

fn to_bytes(img: &GrayImage) -> Vec<u8> {
    img.pixels()
        .iter()
        .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

pub fn to_png_bytes(img: &GrayImage) -> Result<Vec<u8>> {
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, to_bytes(img))
        .ok_or_else(|| Error::invalid("image buffer size mismatch"))?;
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    Ok(out.into_inner())
}

pub fn save_png(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_png_bytes(img)?)?;
    Ok(())
}

/// Writes PNG or PGM depending on the extension (`.pgm` selects PGM).
pub fn save_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let is_pgm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
        out.extend(to_bytes(img));
        std::fs::write(path, out)?;
        Ok(())
    } else {
        save_png(img, path)
    }
}
