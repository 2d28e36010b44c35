//! 16-bit grayscale export (binary PGM and PNG) and PGM import.

use std::path::Path;

use octalias_core::Image;

use crate::error::{read_file, write_file, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm16,
    Png,
}

impl ImageFormat {
    /// Picks the format from a `.pgm` / `.png` extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "pgm" => Some(ImageFormat::Pgm16),
            "png" => Some(ImageFormat::Png),
            _ => None,
        }
    }
}

/// Linear min–max mapping to `0..=65535`. A constant image maps to 0.
pub fn quantize(image: &Image) -> Result<Vec<u16>> {
    if let Some(v) = image.data().iter().find(|v| !v.is_finite()) {
        return Err(Error::Data(format!("cannot export non-finite pixel {v}")));
    }
    let (lo, hi) = image.min_max();
    let span = hi - lo;
    Ok(image
        .data()
        .iter()
        .map(|&v| {
            if span > 0.0 {
                ((v - lo) / span * 65535.0).round() as u16
            } else {
                0
            }
        })
        .collect())
}

/// `P5` header with maxval 65535, then big-endian samples row by row.
pub fn encode_pgm16(image: &Image) -> Result<Vec<u8>> {
    let q = quantize(image)?;
    let header = format!("P5\n{} {}\n65535\n", image.cols(), image.rows());
    let mut out = Vec::with_capacity(header.len() + 2 * q.len());
    out.extend_from_slice(header.as_bytes());
    for v in q {
        out.extend_from_slice(&v.to_be_bytes());
    }
    Ok(out)
}

/// Parses a binary (`P5`) PGM with 8- or 16-bit samples. Pixel values are
/// returned as-is (no rescaling).
pub fn decode_pgm(bytes: &[u8], origin: &Path) -> Result<Image> {
    let mut pos = 0usize;
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::format(origin, 0, "not a binary PGM (magic P5 missing)"));
    }
    pos += 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments between header fields
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(origin, start as u64, "expected a header number"))?;
    }
    let [width, height, maxval] = fields;
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::format(origin, pos as u64, "missing whitespace after maxval"));
    }
    pos += 1;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::format(
            origin,
            0,
            format!("invalid header {width}x{height} maxval {maxval}"),
        ));
    }
    let sample = if maxval < 256 { 1 } else { 2 };
    let expected = width * height * sample;
    let payload = &bytes[pos..];
    if payload.len() != expected {
        return Err(Error::format(
            origin,
            pos as u64,
            format!("payload needs {expected} bytes, found {}", payload.len()),
        ));
    }
    let data = if sample == 1 {
        payload.iter().map(|&b| b as f64).collect()
    } else {
        payload
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
            .collect()
    };
    Ok(Image::new(height, width, data)?)
}

pub fn read_pgm(path: &Path) -> Result<Image> {
    decode_pgm(&read_file(path)?, path)
}

pub fn export_image(image: &Image, path: &Path, format: ImageFormat) -> Result<()> {
    match format {
        ImageFormat::Pgm16 => write_file(path, &encode_pgm16(image)?),
        ImageFormat::Png => {
            let q = quantize(image)?;
            let buf = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(image.cols() as u32, image.rows() as u32, q)
                .ok_or_else(|| Error::Data("image buffer size mismatch".into()))?;
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            buf.save_with_format(path, image::ImageFormat::Png)
                .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
        }
    }
}
