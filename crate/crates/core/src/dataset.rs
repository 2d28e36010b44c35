//! Training-pair construction: patching, blank removal and standardization.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err};
use crate::image::Image;
use crate::nn::Tensor;
use crate::recon::BScanImage;
use crate::unet::TrainSample;
use crate::{Error, Result};

/// Co-located windows of a ground-truth and an undersampled B-scan.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPair {
    pub depth_offset: usize,
    pub col_offset: usize,
    /// Ground-truth amplitude in dB.
    pub target_db: Image,
    pub input_re: Image,
    pub input_im: Image,
}

/// Window start positions along one axis: `0, stride, 2·stride, ...` while the
/// window fits; the remainder is dropped.
pub fn window_offsets(len: usize, patch: usize, stride: usize) -> Vec<usize> {
    if patch == 0 || stride == 0 || patch > len {
        return Vec::new();
    }
    (0..=(len - patch)).step_by(stride).collect()
}

/// Cuts aligned `patch × patch` windows from both images. Windows slide
/// laterally with `stride`; along depth they are top-anchored with the same
/// stride (a single window when `n_depth == patch`).
pub fn extract_patches(gt: &BScanImage, input: &BScanImage, patch: usize, stride: usize) -> Result<Vec<RawPair>> {
    if gt.n_depth != input.n_depth || gt.n_alines != input.n_alines {
        return Err(shape_err!(
            "ground truth {}x{} and input {}x{} are not aligned",
            gt.n_depth,
            gt.n_alines,
            input.n_depth,
            input.n_alines
        ));
    }
    if patch == 0 || stride == 0 {
        return Err(invalid!("patch size and stride must be >= 1"));
    }
    if patch > gt.n_depth || patch > gt.n_alines {
        return Err(invalid!(
            "patch {patch} larger than image {}x{}",
            gt.n_depth,
            gt.n_alines
        ));
    }
    let target = gt.amplitude_image();
    let (re, im) = (input.real_image(), input.imag_image());
    let mut pairs = Vec::new();
    for d in window_offsets(gt.n_depth, patch, stride) {
        for c in window_offsets(gt.n_alines, patch, stride) {
            pairs.push(RawPair {
                depth_offset: d,
                col_offset: c,
                target_db: target.crop(d, c, patch, patch)?,
                input_re: re.crop(d, c, patch, patch)?,
                input_im: im.crop(d, c, patch, patch)?,
            });
        }
    }
    Ok(pairs)
}

/// Fraction of pixels strictly above `floor_db`.
pub fn fraction_above(image_db: &Image, floor_db: f64) -> f64 {
    if image_db.is_empty() {
        return 0.0;
    }
    let above = image_db.data().iter().filter(|&&v| v > floor_db).count();
    above as f64 / image_db.len() as f64
}

/// Drops pairs whose ground truth has fewer than `min_fraction` of its
/// pixels above the floor. Returns the kept pairs and the number removed.
pub fn remove_blanks(pairs: Vec<RawPair>, noise_floor_db: f64, min_fraction: f64) -> (Vec<RawPair>, usize) {
    let before = pairs.len();
    let kept: Vec<RawPair> = pairs
        .into_iter()
        .filter(|p| fraction_above(&p.target_db, noise_floor_db) >= min_fraction)
        .collect();
    let removed = before - kept.len();
    (kept, removed)
}

/// Mean and population standard deviation of one channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
}

impl ChannelStats {
    pub fn of(values: &[f64], channel: &str) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DegenerateChannel(format!("{channel} is empty")));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = libm::sqrt(var);
        if !(std > 0.0 && std.is_finite()) {
            return Err(Error::DegenerateChannel(format!(
                "{channel} has standard deviation {std}"
            )));
        }
        Ok(Self { mean, std })
    }

    pub fn standardize(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn destandardize(&self, v: f64) -> f64 {
        v * self.std + self.mean
    }
}

/// Per-channel statistics of one pair, kept for de-standardization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormMeta {
    pub input_re: ChannelStats,
    pub input_im: ChannelStats,
    pub target: ChannelStats,
}

/// Standardizes the three channels independently and packs them as
/// `input [2,P,P]` and `target [1,P,P]`.
pub fn normalize_pair(pair: &RawPair) -> Result<TrainSample> {
    let (rows, cols) = (pair.target_db.rows(), pair.target_db.cols());
    if !pair.input_re.same_shape(&pair.target_db) || !pair.input_im.same_shape(&pair.target_db) {
        return Err(shape_err!("pair channels have different shapes"));
    }
    let norm_meta = NormMeta {
        input_re: ChannelStats::of(pair.input_re.data(), "input real channel")?,
        input_im: ChannelStats::of(pair.input_im.data(), "input imaginary channel")?,
        target: ChannelStats::of(pair.target_db.data(), "target channel")?,
    };
    let mut input = Vec::with_capacity(2 * rows * cols);
    input.extend(pair.input_re.data().iter().map(|&v| norm_meta.input_re.standardize(v) as f32));
    input.extend(pair.input_im.data().iter().map(|&v| norm_meta.input_im.standardize(v) as f32));
    let target = pair
        .target_db
        .data()
        .iter()
        .map(|&v| norm_meta.target.standardize(v) as f32)
        .collect();
    Ok(TrainSample {
        input: Tensor::from_vec(&[2, rows, cols], input)?,
        target: Tensor::from_vec(&[1, rows, cols], target)?,
        norm_meta,
    })
}

/// Maps standardized values back with `stats` into a `rows × cols` image.
pub fn destandardize(values: &[f32], rows: usize, cols: usize, stats: &ChannelStats) -> Result<Image> {
    Image::new(rows, cols, values.iter().map(|&v| stats.destandardize(v as f64)).collect())
}

/// Standardizes an image with its own statistics, then maps it into the
/// range of `reference`. Used to put an input amplitude image on the same
/// dB scale as its target before scoring.
pub fn match_statistics(image: &Image, reference: &ChannelStats) -> Result<Image> {
    let own = ChannelStats::of(image.data(), "image")?;
    Image::new(
        image.rows(),
        image.cols(),
        image
            .data()
            .iter()
            .map(|&v| reference.destandardize(own.standardize(v)))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recon::{ImageKind, PrepMethod};
    use alloc::vec;
    use num_complex::Complex64;

    fn bscan(depth: usize, alines: usize) -> BScanImage {
        let cols: Vec<Vec<Complex64>> = (0..alines)
            .map(|a| (0..depth).map(|d| Complex64::new(1.0 + d as f64, a as f64)).collect())
            .collect();
        BScanImage::from_columns(&cols, ImageKind::GroundTruth, 1, PrepMethod::None).unwrap()
    }

    #[test]
    fn patch_counts() {
        assert_eq!(window_offsets(5000, 640, 640).len(), 7);
        let g = bscan(8, 8);
        assert_eq!(extract_patches(&g, &g, 8, 8).unwrap().len(), 1);
        let g = bscan(4, 11);
        assert_eq!(extract_patches(&g, &g, 4, 1).unwrap().len(), 8);
        assert!(matches!(extract_patches(&g, &g, 5, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn tall_images_tile_from_the_top() {
        let g = bscan(10, 4);
        let p = extract_patches(&g, &g, 4, 4).unwrap();
        let depths: Vec<usize> = p.iter().map(|q| q.depth_offset).collect();
        assert_eq!(depths, vec![0, 4]);
        assert_eq!(p[1].input_re.get(0, 0), 5.0);
    }

    #[test]
    fn blank_rules() {
        let mk = |vals: &[f64]| RawPair {
            depth_offset: 0,
            col_offset: 0,
            target_db: Image::new(2, 2, vals.to_vec()).unwrap(),
            input_re: Image::filled(2, 2, 0.0),
            input_im: Image::filled(2, 2, 0.0),
        };
        let pairs = vec![mk(&[0.0; 4]), mk(&[10.0, 10.0, 0.0, 0.0])];
        let (kept, removed) = remove_blanks(pairs.clone(), 5.0, 0.01);
        assert_eq!((kept.len(), removed), (1, 1));
        assert_eq!(kept[0], pairs[1]);
        assert_eq!(remove_blanks(pairs, 5.0, 0.0).1, 0);
    }

    #[test]
    fn standardize_roundtrip() {
        let re = Image::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let im = Image::new(2, 2, vec![-1.0, 0.5, 0.0, 7.0]).unwrap();
        let tg = Image::new(2, 2, vec![30.0, 40.0, 80.0, 90.0]).unwrap();
        let pair = RawPair { depth_offset: 0, col_offset: 0, target_db: tg.clone(), input_re: re, input_im: im };
        let s = normalize_pair(&pair).unwrap();
        let back = destandardize(s.target.data(), 2, 2, &s.norm_meta.target).unwrap();
        for (a, b) in back.data().iter().zip(tg.data()) {
            assert!((a - b).abs() < 1e-5);
        }
        let flat = RawPair { input_im: Image::filled(2, 2, 3.0), ..pair };
        assert!(matches!(normalize_pair(&flat), Err(Error::DegenerateChannel(_))));
    }
}
