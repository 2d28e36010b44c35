//! The `.octv` binary container.
//!
//! ```text
//! offset  size  field
//! 0       5     magic "OCTV1"
//! 5       12    n_bscans, n_alines, n_samples   (u32 LE each)
//! 17      1     dtype (0 = f32, 1 = f64)
//! 18      8     noise_floor_db                  (f64 LE)
//! 26      ...   payload, row-major [bscan][aline][sample], LE
//! ```
//!
//! The same container stores reconstructed B-scans (see [`crate::recon_io`]);
//! there the "samples" axis holds the per-A-line depth values.

use std::path::Path;

use octalias_core::phantom::SpectralVolume;

use crate::error::{read_file, write_file, Error, Result};

pub const VOLUME_MAGIC: &[u8; 5] = b"OCTV1";
pub const VOLUME_HEADER_LEN: usize = 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::F32),
            1 => Some(DType::F64),
            _ => None,
        }
    }
}

/// Decoded container contents before any interpretation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawVolume {
    pub dims: [usize; 3],
    pub dtype: DType,
    pub noise_floor_db: f64,
    pub values: Vec<f64>,
}

pub fn encode_raw(raw: &RawVolume) -> Result<Vec<u8>> {
    let count: usize = raw.dims.iter().product();
    if raw.values.len() != count {
        return Err(Error::Data(format!(
            "volume dims {:?} need {count} values, got {}",
            raw.dims,
            raw.values.len()
        )));
    }
    let mut out = Vec::with_capacity(VOLUME_HEADER_LEN + count * raw.dtype.size());
    out.extend_from_slice(VOLUME_MAGIC);
    for &d in &raw.dims {
        let d = u32::try_from(d).map_err(|_| Error::Data(format!("dimension {d} does not fit in u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.push(raw.dtype.code());
    out.extend_from_slice(&raw.noise_floor_db.to_le_bytes());
    match raw.dtype {
        DType::F32 => raw
            .values
            .iter()
            .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        DType::F64 => raw.values.iter().for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
    }
    Ok(out)
}

/// Parses a container, validating the magic, dtype and exact payload length.
/// `origin` is only used in error messages.
pub fn decode_raw(bytes: &[u8], origin: &Path) -> Result<RawVolume> {
    if bytes.len() < VOLUME_HEADER_LEN {
        return Err(Error::format(
            origin,
            bytes.len() as u64,
            format!("header needs {VOLUME_HEADER_LEN} bytes, file has {}", bytes.len()),
        ));
    }
    if &bytes[..5] != VOLUME_MAGIC {
        return Err(Error::format(
            origin,
            0,
            format!("bad magic {:?}, expected \"OCTV1\"", String::from_utf8_lossy(&bytes[..5])),
        ));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let dims = [u32_at(5), u32_at(9), u32_at(13)];
    let dtype = DType::from_code(bytes[17])
        .ok_or_else(|| Error::format(origin, 17, format!("unknown dtype code {}", bytes[17])))?;
    let noise_floor_db = f64::from_le_bytes(bytes[18..26].try_into().expect("8 bytes"));
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .and_then(|c| c.checked_mul(dtype.size()).map(|b| (c, b)));
    let (count, expected) = count.ok_or_else(|| Error::format(origin, 5, format!("dims {dims:?} overflow")))?;
    let payload = &bytes[VOLUME_HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::format(
            origin,
            VOLUME_HEADER_LEN as u64,
            format!(
                "payload for dims {dims:?} ({dtype:?}) needs {expected} bytes, found {}",
                payload.len()
            ),
        ));
    }
    let values: Vec<f64> = match dtype {
        DType::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
        DType::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
    };
    debug_assert_eq!(values.len(), count);
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::format(
            origin,
            (VOLUME_HEADER_LEN + i * dtype.size()) as u64,
            "non-finite sample",
        ));
    }
    Ok(RawVolume {
        dims,
        dtype,
        noise_floor_db,
        values,
    })
}

pub fn encode_volume(volume: &SpectralVolume, dtype: DType) -> Result<Vec<u8>> {
    encode_raw(&RawVolume {
        dims: [volume.n_bscans, volume.n_alines, volume.n_samples],
        dtype,
        noise_floor_db: volume.noise_floor_db,
        values: volume.data.clone(),
    })
}

pub fn decode_volume(bytes: &[u8], origin: &Path) -> Result<SpectralVolume> {
    let raw = decode_raw(bytes, origin)?;
    let [b, a, s] = raw.dims;
    let mut volume = SpectralVolume::new(b, a, s, raw.noise_floor_db, raw.values)?;
    volume
        .meta
        .insert("source".to_string(), origin.display().to_string());
    Ok(volume)
}

/// Writes a spectral volume in 64-bit precision. Metadata is not stored.
pub fn write_volume(volume: &SpectralVolume, path: &Path) -> Result<()> {
    write_file(path, &encode_volume(volume, DType::F64)?)
}

pub fn read_volume(path: &Path) -> Result<SpectralVolume> {
    decode_volume(&read_file(path)?, path)
}

pub fn read_raw(path: &Path) -> Result<RawVolume> {
    decode_raw(&read_file(path)?, path)
}

pub fn write_raw(raw: &RawVolume, path: &Path) -> Result<()> {
    write_file(path, &encode_raw(raw)?)
}
