//! Image formation: full-spectrum ground truth and undersampled network input.
//!
//! Ground truth per A-line: Hann window → DFT → keep bins `[0, N/2)` → dB,
//! followed by a volume-wide background (mean A-scan) subtraction in dB.
//!
//! Undersampled input per A-line: decimate by 2 or 3 → re-expand to `N`
//! samples with one of the prep methods → subtract the scalar mean → DFT →
//! keep bins `[0, N/2)`. No window, no background subtraction. The real and
//! imaginary parts of the kept bins are the two network input channels.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{self, Fft};
use crate::error::{invalid, shape_err};
use crate::phantom::SpectralVolume;
use crate::{Image, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrepMethod {
    None,
    ZeroInterp,
    ZeroPad,
    Nearest,
    Linear,
    Cubic,
}

impl PrepMethod {
    /// The five pre-processors compared for the undersampled input.
    pub const INTERPOLATORS: [PrepMethod; 5] = [
        PrepMethod::ZeroInterp,
        PrepMethod::ZeroPad,
        PrepMethod::Cubic,
        PrepMethod::Linear,
        PrepMethod::Nearest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PrepMethod::None => "none",
            PrepMethod::ZeroInterp => "zero_interp",
            PrepMethod::ZeroPad => "zero_pad",
            PrepMethod::Nearest => "nearest",
            PrepMethod::Linear => "linear",
            PrepMethod::Cubic => "cubic",
        }
    }
}

impl fmt::Display for PrepMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PrepMethod {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => PrepMethod::None,
            "zero_interp" => PrepMethod::ZeroInterp,
            "zero_pad" => PrepMethod::ZeroPad,
            "nearest" => PrepMethod::Nearest,
            "linear" => PrepMethod::Linear,
            "cubic" => PrepMethod::Cubic,
            other => return Err(invalid!("unknown prep method {other:?}")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageKind {
    GroundTruth,
    UndersampledInput,
}

/// One reconstructed B-scan, indexed `[depth][aline]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BScanImage {
    pub n_depth: usize,
    pub n_alines: usize,
    pub complex_data: Vec<Complex64>,
    pub amplitude_db: Vec<f64>,
    pub kind: ImageKind,
    pub undersample_factor: usize,
    pub prep_method: PrepMethod,
}

impl BScanImage {
    /// Assembles an image from per-A-line depth profiles (columns).
    pub fn from_columns(
        columns: &[Vec<Complex64>],
        kind: ImageKind,
        undersample_factor: usize,
        prep_method: PrepMethod,
    ) -> Result<Self> {
        let n_alines = columns.len();
        if n_alines == 0 {
            return Err(invalid!("B-scan needs at least one A-line"));
        }
        let n_depth = columns[0].len();
        let mut complex_data = vec![Complex64::new(0.0, 0.0); n_depth * n_alines];
        for (a, col) in columns.iter().enumerate() {
            if col.len() != n_depth {
                return Err(shape_err!("A-line {a} has {} bins, expected {n_depth}", col.len()));
            }
            for (d, &v) in col.iter().enumerate() {
                complex_data[d * n_alines + a] = v;
            }
        }
        let amplitude_db = dsp::magnitude_db(&complex_data);
        Ok(Self {
            n_depth,
            n_alines,
            complex_data,
            amplitude_db,
            kind,
            undersample_factor,
            prep_method,
        })
    }

    #[inline]
    pub fn index(&self, depth: usize, aline: usize) -> usize {
        depth * self.n_alines + aline
    }

    pub fn amplitude_image(&self) -> Image {
        Image::new(self.n_depth, self.n_alines, self.amplitude_db.clone())
            .expect("amplitude buffer matches dimensions")
    }

    pub fn real_image(&self) -> Image {
        Image::new(
            self.n_depth,
            self.n_alines,
            self.complex_data.iter().map(|z| z.re).collect(),
        )
        .expect("complex buffer matches dimensions")
    }

    pub fn imag_image(&self) -> Image {
        Image::new(
            self.n_depth,
            self.n_alines,
            self.complex_data.iter().map(|z| z.im).collect(),
        )
        .expect("complex buffer matches dimensions")
    }
}

/// Which spectral samples survive decimation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DownsamplePlan {
    pub factor: usize,
    pub original_length: usize,
    pub kept_indices: Vec<usize>,
}

/// Keeps 0-based indices `{0, f, 2f, ...}` for `f` in {2, 3}.
pub fn make_downsample_plan(original_length: usize, factor: usize) -> Result<DownsamplePlan> {
    if !(factor == 2 || factor == 3) {
        return Err(invalid!("unsupported undersampling factor {factor}"));
    }
    if original_length < factor {
        return Err(invalid!(
            "length {original_length} too short for factor {factor}"
        ));
    }
    Ok(DownsamplePlan {
        factor,
        original_length,
        kept_indices: (0..original_length).step_by(factor).collect(),
    })
}

impl DownsamplePlan {
    pub fn kept_len(&self) -> usize {
        self.kept_indices.len()
    }

    pub fn decimate(&self, fringe: &[f64]) -> Result<Vec<f64>> {
        if fringe.len() != self.original_length {
            return Err(shape_err!(
                "fringe has {} samples, plan expects {}",
                fringe.len(),
                self.original_length
            ));
        }
        Ok(self.kept_indices.iter().map(|&i| fringe[i]).collect())
    }
}

/// Re-expands decimated samples to the original length.
///
/// Interpolating methods use `(kept_index, value)` knots and hold the last
/// kept value flat beyond the last knot. `Nearest` resolves equidistant ties
/// toward the lower index.
pub fn reinterpolate(kept: &[f64], plan: &DownsamplePlan, method: PrepMethod) -> Result<Vec<f64>> {
    if kept.len() != plan.kept_len() {
        return Err(shape_err!(
            "{} kept values for a plan keeping {}",
            kept.len(),
            plan.kept_len()
        ));
    }
    let n = plan.original_length;
    let knots = &plan.kept_indices;
    let mut out = vec![0.0; n];
    match method {
        PrepMethod::None => return Err(invalid!("prep method `none` cannot re-expand samples")),
        PrepMethod::ZeroInterp => {
            for (&i, &v) in knots.iter().zip(kept) {
                out[i] = v;
            }
        }
        PrepMethod::ZeroPad => out[..kept.len()].copy_from_slice(kept),
        PrepMethod::Nearest => fill_piecewise(&mut out, knots, kept, |y0, y1, t| {
            if t <= 0.5 {
                y0
            } else {
                y1
            }
        }),
        PrepMethod::Linear => fill_piecewise(&mut out, knots, kept, |y0, y1, t| y0 + (y1 - y0) * t),
        PrepMethod::Cubic => {
            let spline = NaturalSpline::new(knots, kept);
            let last = *knots.last().expect("plan keeps at least one sample");
            for (i, slot) in out.iter_mut().enumerate() {
                *slot = if i >= last {
                    kept[kept.len() - 1]
                } else {
                    spline.eval(i as f64)
                };
            }
            for (&i, &v) in knots.iter().zip(kept) {
                out[i] = v;
            }
        }
    }
    Ok(out)
}

fn fill_piecewise(
    out: &mut [f64],
    knots: &[usize],
    values: &[f64],
    interp: impl Fn(f64, f64, f64) -> f64,
) {
    for w in 0..knots.len() {
        let (i0, y0) = (knots[w], values[w]);
        out[i0] = y0;
        let (end, y1) = match knots.get(w + 1) {
            Some(&i1) => (i1, values[w + 1]),
            None => (out.len(), y0),
        };
        let span = (end - i0) as f64;
        for (i, slot) in out.iter_mut().enumerate().take(end).skip(i0 + 1) {
            *slot = if w + 1 < knots.len() {
                interp(y0, y1, (i - i0) as f64 / span)
            } else {
                y0
            };
        }
    }
}

/// Natural cubic spline (zero second derivative at both ends).
struct NaturalSpline<'a> {
    x: &'a [usize],
    y: &'a [f64],
    m: Vec<f64>,
}

impl<'a> NaturalSpline<'a> {
    fn new(x: &'a [usize], y: &'a [f64]) -> Self {
        let n = x.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior second derivatives.
            let h = |i: usize| (x[i + 1] - x[i]) as f64;
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for r in 0..k {
                let i = r + 1;
                diag[r] = 2.0 * (h(i - 1) + h(i));
                upper[r] = h(i);
                rhs[r] = 6.0 * ((y[i + 1] - y[i]) / h(i) - (y[i] - y[i - 1]) / h(i - 1));
            }
            for r in 1..k {
                let lower = h(r);
                let w = lower / diag[r - 1];
                diag[r] -= w * upper[r - 1];
                rhs[r] -= w * rhs[r - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for r in (0..k - 1).rev() {
                m[r + 1] = (rhs[r] - upper[r] * m[r + 2]) / diag[r];
            }
        }
        Self { x, y, m }
    }

    fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if n == 1 {
            return self.y[0];
        }
        // segment containing t
        let seg = match self.x.binary_search_by(|&xi| (xi as f64).total_cmp(&t)) {
            Ok(i) => return self.y[i],
            Err(i) => i.clamp(1, n - 1) - 1,
        };
        let (x0, x1) = (self.x[seg] as f64, self.x[seg + 1] as f64);
        let h = x1 - x0;
        let a = (x1 - t) / h;
        let b = (t - x0) / h;
        a * self.y[seg]
            + b * self.y[seg + 1]
            + ((a * a * a - a) * self.m[seg] + (b * b * b - b) * self.m[seg + 1]) * h * h / 6.0
    }
}

/// Reusable ground-truth A-line transform for one fringe length.
#[derive(Debug, Clone)]
pub struct FullReconstructor {
    window: Vec<f64>,
    fft: Fft,
}

impl FullReconstructor {
    pub fn new(n_samples: usize) -> Result<Self> {
        if n_samples < 4 || n_samples % 2 != 0 {
            return Err(invalid!("fringe length must be even and >= 4, got {n_samples}"));
        }
        Ok(Self {
            window: dsp::hann_window(n_samples)?,
            fft: Fft::new(n_samples)?,
        })
    }

    /// Complex depth profile (first half of the bins) and its dB amplitude.
    pub fn reconstruct(&self, fringe: &[f64]) -> Result<(Vec<Complex64>, Vec<f64>)> {
        let n = self.window.len();
        if fringe.len() != n {
            return Err(shape_err!("fringe has {} samples, expected {n}", fringe.len()));
        }
        let mut buf: Vec<Complex64> = fringe
            .iter()
            .zip(&self.window)
            .map(|(&x, &w)| Complex64::new(x * w, 0.0))
            .collect();
        self.fft.forward(&mut buf);
        buf.truncate(n / 2);
        let db = dsp::magnitude_db(&buf);
        Ok((buf, db))
    }
}

pub fn reconstruct_aline_full(fringe: &[f64]) -> Result<(Vec<Complex64>, Vec<f64>)> {
    FullReconstructor::new(fringe.len())?.reconstruct(fringe)
}

/// Reusable undersampled A-line transform.
#[derive(Debug, Clone)]
pub struct UndersampledReconstructor {
    plan: DownsamplePlan,
    method: PrepMethod,
    fft: Fft,
}

impl UndersampledReconstructor {
    pub fn new(plan: DownsamplePlan, method: PrepMethod) -> Result<Self> {
        let n = plan.original_length;
        if n < 4 || n % 2 != 0 {
            return Err(invalid!("fringe length must be even and >= 4, got {n}"));
        }
        if method == PrepMethod::None {
            return Err(invalid!("undersampled reconstruction needs a prep method"));
        }
        Ok(Self {
            fft: Fft::new(n)?,
            plan,
            method,
        })
    }

    pub fn plan(&self) -> &DownsamplePlan {
        &self.plan
    }

    pub fn reconstruct(&self, fringe: &[f64]) -> Result<Vec<Complex64>> {
        let kept = self.plan.decimate(fringe)?;
        let expanded = reinterpolate(&kept, &self.plan, self.method)?;
        let mean = expanded.iter().sum::<f64>() / expanded.len() as f64;
        let mut buf: Vec<Complex64> = expanded
            .iter()
            .map(|&x| Complex64::new(x - mean, 0.0))
            .collect();
        self.fft.forward(&mut buf);
        buf.truncate(self.plan.original_length / 2);
        Ok(buf)
    }
}

pub fn reconstruct_aline_undersampled(
    fringe: &[f64],
    plan: &DownsamplePlan,
    method: PrepMethod,
) -> Result<Vec<Complex64>> {
    if fringe.len() != plan.original_length {
        return Err(shape_err!(
            "fringe has {} samples, plan expects {}",
            fringe.len(),
            plan.original_length
        ));
    }
    UndersampledReconstructor::new(plan.clone(), method)?.reconstruct(fringe)
}

/// Subtracts the volume-wide mean dB A-scan from every A-line and returns
/// that mean A-scan. The complex data is rescaled by the matching factor and
/// `amplitude_db` is recomputed from it, so it always equals
/// `magnitude_db(complex_data)` (also after a save/load cycle).
pub fn background_subtract(images: &mut [BScanImage]) -> Result<Vec<f64>> {
    let first = images
        .first()
        .ok_or_else(|| invalid!("background subtraction on an empty volume"))?;
    let n_depth = first.n_depth;
    if images.iter().any(|im| im.n_depth != n_depth) {
        return Err(shape_err!("B-scans in one volume must share the depth size"));
    }
    let total_alines: usize = images.iter().map(|im| im.n_alines).sum();
    if total_alines == 0 {
        return Err(invalid!("background subtraction needs at least one A-line"));
    }
    // Fixed-order summation, so the reduction is reproducible.
    let mut mean = vec![0.0; n_depth];
    for im in images.iter() {
        for (d, m) in mean.iter_mut().enumerate() {
            let row = &im.amplitude_db[d * im.n_alines..(d + 1) * im.n_alines];
            *m += row.iter().sum::<f64>();
        }
    }
    for m in mean.iter_mut() {
        *m /= total_alines as f64;
    }
    for im in images.iter_mut() {
        for (d, &m) in mean.iter().enumerate() {
            let scale = libm::pow(10.0, -m / 20.0);
            for a in 0..im.n_alines {
                let i = d * im.n_alines + a;
                im.complex_data[i] *= scale;
                im.amplitude_db[i] = dsp::amplitude_to_db(dsp::abs(im.complex_data[i]));
            }
        }
    }
    Ok(mean)
}

/// Ground-truth images of a volume plus the mean A-scan removed from them.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub images: Vec<BScanImage>,
    pub background_db: Vec<f64>,
    /// Noise floor expressed in the background-subtracted domain.
    pub noise_floor_db: f64,
}

/// The acquisition floor is an absolute dB level; after background
/// subtraction, pure-noise depths sit at the lowest level of the removed mean
/// A-scan, so the floor shifts down by that amount.
pub fn ground_truth_floor(noise_floor_db: f64, background_db: &[f64]) -> f64 {
    let noise_level = background_db
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if noise_level.is_finite() {
        noise_floor_db - noise_level
    } else {
        noise_floor_db
    }
}

pub fn reconstruct_ground_truth(volume: &SpectralVolume) -> Result<GroundTruth> {
    let rec = FullReconstructor::new(volume.n_samples)?;
    let mut images = Vec::with_capacity(volume.n_bscans);
    for b in 0..volume.n_bscans {
        let columns = (0..volume.n_alines)
            .map(|a| rec.reconstruct(volume.aline(b, a)).map(|(z, _)| z))
            .collect::<Result<Vec<_>>>()?;
        images.push(BScanImage::from_columns(
            &columns,
            ImageKind::GroundTruth,
            1,
            PrepMethod::None,
        )?);
    }
    let background_db = background_subtract(&mut images)?;
    let noise_floor_db = ground_truth_floor(volume.noise_floor_db, &background_db);
    Ok(GroundTruth {
        images,
        background_db,
        noise_floor_db,
    })
}

pub fn reconstruct_undersampled(
    volume: &SpectralVolume,
    factor: usize,
    method: PrepMethod,
) -> Result<Vec<BScanImage>> {
    let plan = make_downsample_plan(volume.n_samples, factor)?;
    let rec = UndersampledReconstructor::new(plan, method)?;
    (0..volume.n_bscans)
        .map(|b| {
            let columns = (0..volume.n_alines)
                .map(|a| rec.reconstruct(volume.aline(b, a)))
                .collect::<Result<Vec<_>>>()?;
            BScanImage::from_columns(&columns, ImageKind::UndersampledInput, factor, method)
        })
        .collect()
}

/// Factor 1 runs the ground-truth chain (the method is ignored); factors 2
/// and 3 run the undersampled chain with `method`.
pub fn reconstruct_volume(
    volume: &SpectralVolume,
    factor: usize,
    method: PrepMethod,
) -> Result<Vec<BScanImage>> {
    match factor {
        1 => Ok(reconstruct_ground_truth(volume)?.images),
        2 | 3 => reconstruct_undersampled(volume, factor, method),
        other => Err(invalid!("unsupported undersampling factor {other}")),
    }
}

/// Parses `"2"`/`"3"`-style factors from user input.
pub fn parse_factor(s: &str) -> Result<usize> {
    match s.trim() {
        "1" => Ok(1),
        "2" => Ok(2),
        "3" => Ok(3),
        other => Err(invalid!("unsupported undersampling factor {other:?}")),
    }
}

pub fn method_label(method: PrepMethod) -> String {
    String::from(match method {
        PrepMethod::ZeroInterp => "Zero interpolation",
        PrepMethod::ZeroPad => "Zero-padding",
        PrepMethod::Cubic => "Cubic interpolation",
        PrepMethod::Linear => "Linear interpolation",
        PrepMethod::Nearest => "Nearest neighbor interpolation",
        PrepMethod::None => "Full spectrum",
    })
}
