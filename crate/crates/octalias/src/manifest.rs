//! Training datasets: patch pairs cut from aligned ground-truth and
//! undersampled reconstructions, listed in a JSON manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use octalias_core::dataset::{extract_patches, normalize_pair, remove_blanks, NormMeta};
use octalias_core::recon::{BScanImage, PrepMethod};
use octalias_core::unet::TrainSample;
use serde::{Deserialize, Serialize};

use crate::error::{read_json, write_json, Error, Result};
use crate::recon_io::{list_recon_stems, read_recon, ReconKind, ReconSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSample {
    /// Ground-truth reconstruction, as `<dir>/<stem>` (without extension).
    pub ground_truth: String,
    /// Undersampled reconstruction, as `<dir>/<stem>`.
    pub input: String,
    pub bscan: usize,
    pub depth_offset: usize,
    pub col_offset: usize,
    pub norm_meta: NormMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub patch_size: usize,
    pub stride: usize,
    pub min_fraction: f64,
    pub undersample_factor: usize,
    pub prep_method: PrepMethod,
    pub removed_blanks: usize,
    /// Pairs dropped because a channel was constant.
    pub skipped_degenerate: usize,
    pub samples: Vec<ManifestSample>,
}

/// One ground-truth set and its undersampled counterpart, with the labels
/// recorded in the manifest.
pub struct VolumePair<'a> {
    pub ground_truth_label: String,
    pub input_label: String,
    pub ground_truth: &'a [BScanImage],
    pub input: &'a [BScanImage],
    pub noise_floor_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchParams {
    pub patch_size: usize,
    pub stride: usize,
    pub min_fraction: f64,
}

/// Builds standardized samples in canonical order (volume, B-scan, depth
/// offset, column offset) plus the manifest describing them.
pub fn build_dataset(pairs: &[VolumePair<'_>], params: PatchParams) -> Result<(DatasetManifest, Vec<TrainSample>)> {
    let first = pairs
        .first()
        .and_then(|p| p.input.first())
        .ok_or_else(|| Error::Data("dataset needs at least one undersampled B-scan".into()))?;
    let (factor, method) = (first.undersample_factor, first.prep_method);
    let mut manifest = DatasetManifest {
        patch_size: params.patch_size,
        stride: params.stride,
        min_fraction: params.min_fraction,
        undersample_factor: factor,
        prep_method: method,
        removed_blanks: 0,
        skipped_degenerate: 0,
        samples: Vec::new(),
    };
    let mut samples = Vec::new();
    let mut order: Vec<&VolumePair<'_>> = pairs.iter().collect();
    order.sort_by(|a, b| a.ground_truth_label.cmp(&b.ground_truth_label));
    for pair in order {
        if pair.ground_truth.len() != pair.input.len() {
            return Err(Error::Data(format!(
                "{} has {} B-scans but {} has {}",
                pair.ground_truth_label,
                pair.ground_truth.len(),
                pair.input_label,
                pair.input.len()
            )));
        }
        for (b, (gt, input)) in pair.ground_truth.iter().zip(pair.input).enumerate() {
            if (input.undersample_factor, input.prep_method) != (factor, method) {
                return Err(Error::Data(format!(
                    "{} mixes undersampling settings ({}x {} vs {}x {})",
                    pair.input_label, input.undersample_factor, input.prep_method, factor, method
                )));
            }
            let raw = extract_patches(gt, input, params.patch_size, params.stride)?;
            let (kept, removed) = remove_blanks(raw, pair.noise_floor_db, params.min_fraction);
            manifest.removed_blanks += removed;
            for p in kept {
                match normalize_pair(&p) {
                    Ok(sample) => {
                        manifest.samples.push(ManifestSample {
                            ground_truth: pair.ground_truth_label.clone(),
                            input: pair.input_label.clone(),
                            bscan: b,
                            depth_offset: p.depth_offset,
                            col_offset: p.col_offset,
                            norm_meta: sample.norm_meta,
                        });
                        samples.push(sample);
                    }
                    Err(octalias_core::Error::DegenerateChannel(_)) => manifest.skipped_degenerate += 1,
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }
    Ok((manifest, samples))
}

fn label(dir: &Path, stem: &str) -> String {
    let dir = dir.canonicalize().unwrap_or_else(|_| dir.to_path_buf());
    dir.join(stem).display().to_string()
}

fn split_label(label: &str) -> (PathBuf, String) {
    let p = Path::new(label);
    let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
    let stem = p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    (dir, stem)
}

/// Pairs every reconstruction in `gt_dir` with the same-named one in `in_dir`.
pub fn build_dataset_from_dirs(
    gt_dir: &Path,
    in_dir: &Path,
    params: PatchParams,
) -> Result<(DatasetManifest, Vec<TrainSample>)> {
    let mut sets = Vec::new();
    for stem in list_recon_stems(gt_dir)? {
        let gt = read_recon(gt_dir, &stem)?;
        if gt.meta.kind != ReconKind::GroundTruth {
            return Err(Error::Data(format!("{}/{stem} is not a ground-truth reconstruction", gt_dir.display())));
        }
        let input = read_recon(in_dir, &stem)?;
        if input.meta.kind != ReconKind::UndersampledInput {
            return Err(Error::Data(format!("{}/{stem} is not an undersampled reconstruction", in_dir.display())));
        }
        sets.push((label(gt_dir, &stem), label(in_dir, &stem), gt, input));
    }
    let pairs = sets
        .iter()
        .map(|(gl, il, gt, input)| {
            Ok(VolumePair {
                ground_truth_label: gl.clone(),
                input_label: il.clone(),
                ground_truth: gt.complex()?,
                input: input.complex()?,
                noise_floor_db: gt.meta.noise_floor_db,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    build_dataset(&pairs, params)
}

/// Re-cuts and re-standardizes every sample listed in a manifest. Fails if a
/// referenced reconstruction changed since the manifest was written.
pub fn load_samples(manifest: &DatasetManifest) -> Result<Vec<TrainSample>> {
    let mut sets: BTreeMap<&str, ReconSet> = BTreeMap::new();
    for s in &manifest.samples {
        for label in [s.ground_truth.as_str(), s.input.as_str()] {
            if !sets.contains_key(label) {
                let (dir, stem) = split_label(label);
                sets.insert(label, read_recon(&dir, &stem)?);
            }
        }
    }
    let mut out = Vec::with_capacity(manifest.samples.len());
    let p = manifest.patch_size;
    for s in &manifest.samples {
        let (gt, input) = (sets[s.ground_truth.as_str()].complex()?, sets[s.input.as_str()].complex()?);
        let (g, i) = match (gt.get(s.bscan), input.get(s.bscan)) {
            (Some(g), Some(i)) => (g, i),
            _ => return Err(Error::Data(format!("B-scan {} missing from {}", s.bscan, s.input))),
        };
        let pair = octalias_core::dataset::RawPair {
            depth_offset: s.depth_offset,
            col_offset: s.col_offset,
            target_db: g.amplitude_image().crop(s.depth_offset, s.col_offset, p, p)?,
            input_re: i.real_image().crop(s.depth_offset, s.col_offset, p, p)?,
            input_im: i.imag_image().crop(s.depth_offset, s.col_offset, p, p)?,
        };
        let sample = normalize_pair(&pair)?;
        if sample.norm_meta != s.norm_meta {
            return Err(Error::Data(format!(
                "sample at {} B-scan {} ({}, {}) no longer matches the manifest",
                s.input, s.bscan, s.depth_offset, s.col_offset
            )));
        }
        out.push(sample);
    }
    Ok(out)
}

pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    write_json(path, manifest)
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    read_json(path)
}
