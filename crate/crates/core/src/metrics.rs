//! Noise-gated image quality metrics and spatial-frequency profiles.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{self, Fft};
use crate::error::invalid;
use crate::image::{ensure_same_shape, Image};
use crate::{Error, Result};

/// Floor applied to magnitudes before `log10` in [`spectrum_profile`].
pub const LOG_FLOOR_MAGNITUDE: f64 = 1e-12;

/// Stabilizing constants of the SSIM formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub c1: f64,
    pub c2: f64,
}

impl Default for SsimParams {
    /// `(0.01·L)²` and `(0.03·L)²` for a unit dynamic range.
    fn default() -> Self {
        Self {
            c1: 0.01 * 0.01,
            c2: 0.03 * 0.03,
        }
    }
}

impl SsimParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c2 > 0.0 && self.c1.is_finite() && self.c2.is_finite()) {
            return Err(invalid!("SSIM constants must be finite and > 0: {self:?}"));
        }
        Ok(())
    }
}

/// Clamps both dB images at `noise_floor_db` and maps them to gray levels with
/// the affine map that sends the clamped target's range onto `[0, 1]`. The
/// output is clipped to `[0, 1]` after the shared mapping.
pub fn prepare_for_metrics(output_db: &Image, target_db: &Image, noise_floor_db: f64) -> Result<(Image, Image)> {
    ensure_same_shape(output_db, target_db)?;
    if !noise_floor_db.is_finite() {
        return Err(invalid!("noise floor must be finite, got {noise_floor_db}"));
    }
    let clamp = |v: f64| v.max(noise_floor_db);
    let (lo, hi) = target_db
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            let v = clamp(v);
            (lo.min(v), hi.max(v))
        });
    if !(hi > lo) {
        return Err(Error::DegenerateRange(alloc::format!(
            "target is constant at {lo} dB after gating at {noise_floor_db} dB"
        )));
    }
    let span = hi - lo;
    let map = |v: f64| ((clamp(v) - lo) / span).clamp(0.0, 1.0);
    let gray = |im: &Image| {
        Image::new(im.rows(), im.cols(), im.data().iter().map(|&v| map(v)).collect())
            .expect("same dimensions as the source")
    };
    Ok((gray(output_db), gray(target_db)))
}

/// Mean of `(I − K)²` over all pixels.
pub fn mse(i: &Image, k: &Image) -> Result<f64> {
    ensure_same_shape(i, k)?;
    if i.is_empty() {
        return Err(invalid!("mse of empty images"));
    }
    let sum: f64 = i.data().iter().zip(k.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / i.len() as f64)
}

/// `10·log10(max_i² / mse)`; identical images give `f64::INFINITY`.
pub fn psnr(i: &Image, k: &Image, max_i: f64) -> Result<f64> {
    if !(max_i > 0.0) {
        return Err(invalid!("max_i must be > 0, got {max_i}"));
    }
    Ok(psnr_from_mse(mse(i, k)?, max_i))
}

/// `10·log10(max_i² / mse)` with the `mse = 0` sentinel.
pub fn psnr_from_mse(mse: f64, max_i: f64) -> f64 {
    if mse == 0.0 {
        return f64::INFINITY;
    }
    10.0 * libm::log10(max_i * max_i / mse)
}

/// Single-window SSIM over the whole image with 1/N moments.
pub fn ssim(a: &Image, b: &Image, params: SsimParams) -> Result<f64> {
    ensure_same_shape(a, b)?;
    params.validate()?;
    if a.len() < 2 {
        return Err(invalid!("ssim needs at least 2 pixels, got {}", a.len()));
    }
    let n = a.len() as f64;
    let mu_a = a.data().iter().sum::<f64>() / n;
    let mu_b = b.data().iter().sum::<f64>() / n;
    let (mut var_a, mut var_b, mut cov) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (dx, dy) = (x - mu_a, y - mu_b);
        var_a += dx * dx;
        var_b += dy * dy;
        cov += dx * dy;
    }
    var_a /= n;
    var_b /= n;
    cov /= n;
    let num = (2.0 * mu_a * mu_b + params.c1) * (2.0 * cov + params.c2);
    let den = (mu_a * mu_a + mu_b * mu_b + params.c1) * (var_a + var_b + params.c2);
    Ok(num / den)
}

/// Mean over columns `start..end` of `log10(max(|DFT_depth(column)|, 1e-12))`.
/// The result has one entry per depth-frequency bin.
pub fn spectrum_profile(image_db: &Image, start: usize, end: usize) -> Result<Vec<f64>> {
    if start >= end || end > image_db.cols() {
        return Err(invalid!(
            "column range {start}..{end} is empty or exceeds {} columns",
            image_db.cols()
        ));
    }
    let n = image_db.rows();
    let fft = Fft::new(n)?;
    let mut profile = vec![0.0; n];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for c in start..end {
        for (r, z) in buf.iter_mut().enumerate() {
            *z = Complex64::new(image_db.get(r, c), 0.0);
        }
        fft.forward(&mut buf);
        for (p, z) in profile.iter_mut().zip(&buf) {
            *p += libm::log10(dsp::abs(*z).max(LOG_FLOOR_MAGNITUDE));
        }
    }
    let count = (end - start) as f64;
    for p in profile.iter_mut() {
        *p /= count;
    }
    Ok(profile)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub image_id: String,
    pub psnr: f64,
    pub ssim: f64,
}

/// Aggregated scores for one method, laid out like a Table-1 row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method_label: String,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
    /// Images with identical gray levels, left out of the PSNR statistics.
    pub infinite_psnr_count: usize,
    pub per_image: Vec<ImageScore>,
}

/// One image to score: network (or baseline) output, target, and the floor.
#[derive(Debug, Clone)]
pub struct EvalPair {
    pub image_id: String,
    pub output_db: Image,
    pub target_db: Image,
    pub noise_floor_db: f64,
}

/// Population mean and standard deviation. Empty input gives NaN.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

pub fn evaluate_pairs(pairs: &[EvalPair], label: &str, params: SsimParams) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(invalid!("no image pairs to evaluate for {label:?}"));
    }
    let per_image = pairs
        .iter()
        .map(|p| {
            let (out, tgt) = prepare_for_metrics(&p.output_db, &p.target_db, p.noise_floor_db)?;
            Ok(ImageScore {
                image_id: p.image_id.clone(),
                psnr: psnr(&out, &tgt, 1.0)?,
                ssim: ssim(&out, &tgt, params)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(label, per_image))
}

/// Builds a report from per-image scores already computed.
pub fn aggregate(label: &str, per_image: Vec<ImageScore>) -> MetricsReport {
    let finite_psnr: Vec<f64> = per_image.iter().map(|s| s.psnr).filter(|v| v.is_finite()).collect();
    let ssims: Vec<f64> = per_image.iter().map(|s| s.ssim).collect();
    let (psnr_mean, psnr_std) = mean_std(&finite_psnr);
    let (ssim_mean, ssim_std) = mean_std(&ssims);
    MetricsReport {
        method_label: String::from(label),
        psnr_mean,
        psnr_std,
        ssim_mean,
        ssim_std,
        infinite_psnr_count: per_image.len() - finite_psnr.len(),
        per_image,
    }
}
