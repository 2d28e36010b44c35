//! Reconstructed B-scan sets on disk: `<stem>.octv` holds the values,
//! `<stem>.json` describes them, and `<stem>_bNNN.pgm` are 16-bit previews.
//!
//! Complex sets store, per A-line, the `n_depth` real parts followed by the
//! `n_depth` imaginary parts, so the samples axis is `2·n_depth`. Real sets
//! (amplitude dB or standardized network output) store `n_depth` values.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use octalias_core::recon::{BScanImage, GroundTruth, ImageKind, PrepMethod};
use octalias_core::Image;
use serde::{Deserialize, Serialize};

use crate::error::{read_json, write_json, Error, Result};
use crate::imageio::{export_image, ImageFormat};
use crate::volume::{read_raw, write_raw, DType, RawVolume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconKind {
    GroundTruth,
    UndersampledInput,
    Prediction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Content {
    Complex,
    AmplitudeDb,
    /// Network output in standardized units; de-standardize before scoring.
    Standardized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconMeta {
    pub kind: ReconKind,
    pub content: Content,
    pub undersample_factor: usize,
    pub prep_method: PrepMethod,
    pub n_bscans: usize,
    pub n_depth: usize,
    pub n_alines: usize,
    /// Gating level in the same dB domain as the stored amplitudes.
    pub noise_floor_db: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background_db: Option<Vec<f64>>,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReconData {
    Complex(Vec<BScanImage>),
    Real(Vec<Image>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconSet {
    pub meta: ReconMeta,
    pub data: ReconData,
}

impl ReconSet {
    pub fn from_ground_truth(gt: GroundTruth, source: &str) -> Self {
        let first = &gt.images[0];
        Self {
            meta: ReconMeta {
                kind: ReconKind::GroundTruth,
                content: Content::Complex,
                undersample_factor: 1,
                prep_method: PrepMethod::None,
                n_bscans: gt.images.len(),
                n_depth: first.n_depth,
                n_alines: first.n_alines,
                noise_floor_db: gt.noise_floor_db,
                background_db: Some(gt.background_db),
                source: source.to_string(),
            },
            data: ReconData::Complex(gt.images),
        }
    }

    pub fn from_undersampled(images: Vec<BScanImage>, noise_floor_db: f64, source: &str) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::Data("reconstruction produced no B-scans".into()))?;
        Ok(Self {
            meta: ReconMeta {
                kind: ReconKind::UndersampledInput,
                content: Content::Complex,
                undersample_factor: first.undersample_factor,
                prep_method: first.prep_method,
                n_bscans: images.len(),
                n_depth: first.n_depth,
                n_alines: first.n_alines,
                noise_floor_db,
                background_db: None,
                source: source.to_string(),
            },
            data: ReconData::Complex(images),
        })
    }

    pub fn complex(&self) -> Result<&[BScanImage]> {
        match &self.data {
            ReconData::Complex(v) => Ok(v),
            ReconData::Real(_) => Err(Error::Data(format!(
                "{} holds {:?} values, complex data required",
                self.meta.source, self.meta.content
            ))),
        }
    }

    /// Amplitude (dB) images for complex sets, the stored images otherwise.
    pub fn images(&self) -> Vec<Image> {
        match &self.data {
            ReconData::Complex(v) => v.iter().map(BScanImage::amplitude_image).collect(),
            ReconData::Real(v) => v.clone(),
        }
    }
}

fn to_raw(set: &ReconSet) -> RawVolume {
    let m = &set.meta;
    let mut values = Vec::new();
    match &set.data {
        ReconData::Complex(images) => {
            values.reserve(m.n_bscans * m.n_alines * 2 * m.n_depth);
            for im in images {
                for a in 0..im.n_alines {
                    values.extend((0..im.n_depth).map(|d| im.complex_data[im.index(d, a)].re));
                    values.extend((0..im.n_depth).map(|d| im.complex_data[im.index(d, a)].im));
                }
            }
        }
        ReconData::Real(images) => {
            for im in images {
                for a in 0..im.cols() {
                    values.extend((0..im.rows()).map(|d| im.get(d, a)));
                }
            }
        }
    }
    let samples = match m.content {
        Content::Complex => 2 * m.n_depth,
        _ => m.n_depth,
    };
    RawVolume {
        dims: [m.n_bscans, m.n_alines, samples],
        dtype: DType::F64,
        noise_floor_db: m.noise_floor_db,
        values,
    }
}

fn from_raw(meta: ReconMeta, raw: RawVolume, path: &Path) -> Result<ReconSet> {
    let samples = match meta.content {
        Content::Complex => 2 * meta.n_depth,
        _ => meta.n_depth,
    };
    if raw.dims != [meta.n_bscans, meta.n_alines, samples] {
        return Err(Error::format(
            path,
            5,
            format!(
                "dims {:?} disagree with sidecar ({} B-scans, {} A-lines, {samples} samples)",
                raw.dims, meta.n_bscans, meta.n_alines
            ),
        ));
    }
    let per_aline = samples;
    let per_bscan = meta.n_alines * per_aline;
    let data = match meta.content {
        Content::Complex => {
            let kind = match meta.kind {
                ReconKind::GroundTruth => ImageKind::GroundTruth,
                _ => ImageKind::UndersampledInput,
            };
            let images = raw
                .values
                .chunks_exact(per_bscan)
                .map(|b| {
                    let columns: Vec<Vec<Complex64>> = b
                        .chunks_exact(per_aline)
                        .map(|col| {
                            let (re, im) = col.split_at(meta.n_depth);
                            re.iter().zip(im).map(|(&r, &i)| Complex64::new(r, i)).collect()
                        })
                        .collect();
                    BScanImage::from_columns(&columns, kind, meta.undersample_factor, meta.prep_method)
                        .map_err(Error::from)
                })
                .collect::<Result<Vec<_>>>()?;
            ReconData::Complex(images)
        }
        _ => ReconData::Real(
            raw.values
                .chunks_exact(per_bscan)
                .map(|b| Image::from_fn(meta.n_depth, meta.n_alines, |d, a| b[a * per_aline + d]))
                .collect(),
        ),
    };
    Ok(ReconSet { meta, data })
}

pub fn recon_paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{stem}.octv")), dir.join(format!("{stem}.json")))
}

/// Writes the container, the sidecar and one PGM preview per B-scan.
pub fn write_recon(dir: &Path, stem: &str, set: &ReconSet) -> Result<()> {
    let (data_path, meta_path) = recon_paths(dir, stem);
    write_raw(&to_raw(set), &data_path)?;
    write_json(&meta_path, &set.meta)?;
    for (i, im) in set.images().iter().enumerate() {
        export_image(im, &dir.join(format!("{stem}_b{i:03}.pgm")), ImageFormat::Pgm16)?;
    }
    Ok(())
}

pub fn read_recon(dir: &Path, stem: &str) -> Result<ReconSet> {
    let (data_path, meta_path) = recon_paths(dir, stem);
    let meta: ReconMeta = read_json(&meta_path)?;
    let raw = read_raw(&data_path)?;
    from_raw(meta, raw, &data_path)
}

/// Stems of every `<stem>.octv` with a `<stem>.json` sidecar, sorted.
pub fn list_recon_stems(dir: &Path) -> Result<Vec<String>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut stems = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "octv") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                if dir.join(format!("{stem}.json")).is_file() {
                    stems.push(stem.to_string());
                }
            }
        }
    }
    stems.sort();
    if stems.is_empty() {
        return Err(Error::Data(format!(
            "{}: no reconstructions (<name>.octv + <name>.json) found",
            dir.display()
        )));
    }
    Ok(stems)
}
