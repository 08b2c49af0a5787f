//! PPM (P6) and PNG reading and writing, plus visualization helpers.

use std::fs;
use std::path::Path;

use crate::carver::TapCarve;
use crate::engine::tensor::Tensor;
use crate::error::{Error, Result};

pub fn to_unit(v: u8) -> f32 {
    v as f32 / 255.0
}

pub fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn from_bytes(h: usize, w: usize, bytes: &[u8]) -> Tensor {
    Tensor::from_fn(h, w, 3, |i, j, k| to_unit(bytes[(i * w + j) * 3 + k]))
}

fn to_bytes(image: &Tensor) -> Result<Vec<u8>> {
    if image.channels() != 3 {
        return Err(Error::InvalidArgument(format!(
            "only 3-channel images can be written, got {}",
            image.channels()
        )));
    }
    Ok(image.data().iter().map(|&v| to_byte(v)).collect())
}

/// Parses a binary PPM with maxval 255. Header comments are skipped.
pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor> {
    let bad = |msg: &str| Error::Decode(format!("PPM: {msg}"));
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ASCII"))?);
    }
    if fields[0] != "P6" {
        return Err(bad("not a binary (P6) file"));
    }
    let num = |s: &str, what: &str| s.parse::<usize>().map_err(|_| bad(&format!("bad {what} {s:?}")));
    let (w, h, maxval) = (num(fields[1], "width")?, num(fields[2], "height")?, num(fields[3], "maxval")?);
    if maxval != 255 {
        return Err(bad(&format!("maxval {maxval} unsupported, expected 255")));
    }
    if w == 0 || h == 0 {
        return Err(bad("empty image"));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(bad("missing separator after header"));
    }
    pos += 1;
    let need = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| bad("dimensions overflow"))?;
    if bytes.len() - pos < need {
        return Err(bad(&format!("expected {need} pixel bytes, found {}", bytes.len() - pos)));
    }
    Ok(from_bytes(h, w, &bytes[pos..pos + need]))
}

pub fn encode_ppm(image: &Tensor) -> Result<Vec<u8>> {
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(to_bytes(image)?);
    Ok(out)
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Reads a PPM or PNG (chosen by content) as an RGB tensor in `[0, 1]`.
pub fn read_image(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::Decode(format!("{}: {e}", path.display())))?;
    if bytes.starts_with(b"\x89PNG") {
        let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
            .map_err(|e| Error::Decode(format!("{}: {e}", path.display())))?
            .to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        return Ok(from_bytes(h, w, img.as_raw()));
    }
    decode_ppm(&bytes).map_err(|e| Error::Decode(format!("{}: {e}", path.display())))
}

/// Writes PNG when the extension is `.png`, PPM otherwise.
pub fn write_image(path: &Path, image: &Tensor) -> Result<()> {
    if is_png(path) {
        let buf = image::RgbImage::from_raw(image.width() as u32, image.height() as u32, to_bytes(image)?)
            .ok_or_else(|| Error::InvalidArgument("image buffer size".into()))?;
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        return Ok(());
    }
    fs::write(path, encode_ppm(image)?)?;
    Ok(())
}

/// A single-channel map stretched to `[0, 1]` and replicated to gray RGB.
/// A constant map becomes black.
pub fn gray_visual(map: &Tensor) -> Tensor {
    let (lo, hi) = map.min_max();
    let span = hi - lo;
    Tensor::from_fn(map.height(), map.width(), 3, |i, j, _| {
        if span > 0.0 {
            (map.get(i, j, 0) - lo) / span
        } else {
            0.0
        }
    })
}

/// Gray visualization of `map` (the tap's original size) with every removed
/// seam drawn in red at its original columns.
pub fn seam_overlay(map: &Tensor, carve: &TapCarve) -> Tensor {
    let mut out = gray_visual(map);
    for s in &carve.seams {
        for (i, &c) in s.original.iter().enumerate() {
            out.set(i, c, 0, 1.0);
            out.set(i, c, 1, 0.0);
            out.set(i, c, 2, 0.0);
        }
    }
    out
}
