//! Synthetic swept-source interferograms with known layered structure.
//!
//! A reflector is described by the number of fringe cycles it produces across
//! the whole sweep, which is exactly the depth bin it lands in after a
//! full-length DFT. Physically `z = cycles·π/Δk`; for a 1300 nm source with a
//! 100 nm sweep that is roughly 8.4 µm per cycle, but nothing below depends on
//! the physical mapping.
//!
//! Each B-scan draws from its own ChaCha stream derived from
//! `(rng_seed, bscan_index)`, so volumes are bit-identical regardless of the
//! order in which B-scans are produced.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dsp::{self, Fft};
use crate::error::invalid;
use crate::Result;

/// Number of reflector-free A-lines used to estimate the noise floor.
pub const CALIBRATION_ALINES: usize = 32;

/// Percentile of calibration dB amplitudes taken as the noise floor.
pub const CALIBRATION_PERCENTILE: f64 = 0.99;

const CALIBRATION_STREAM: u64 = u64::MAX;
const BOUNDARY_HARMONICS: usize = 3;
const MIN_BOUNDARY_GAP: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reflector {
    /// Fringe cycles across the full sweep.
    pub cycles: f64,
    pub amplitude: f64,
    /// Radians in `[0, 2π)`.
    pub phase: f64,
}

/// One tissue surface. The lateral shape is a sum of low-frequency sinusoids
/// whose coefficients are drawn per B-scan, bounded by `waviness` cycles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCurve {
    /// Mean depth in cycles.
    pub depth: f64,
    #[serde(default = "default_reflectivity")]
    pub reflectivity: f64,
    #[serde(default)]
    pub waviness: f64,
}

fn default_reflectivity() -> f64 {
    1.0
}

fn default_n_samples() -> usize {
    1280
}

fn default_scatterer_reflectivity() -> f64 {
    0.3
}

fn default_substrate_thickness() -> f64 {
    0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub n_bscans: usize,
    pub n_alines: usize,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    pub layer_boundaries: Vec<BoundaryCurve>,
    /// Expected intra-layer scatterers per cycle of layer thickness, per A-line.
    pub scatterers_per_layer_density: f64,
    /// Amplitude decay per depth bin, `exp(−rate·cycles)`.
    pub axial_decay_rate: f64,
    /// Gaussian source-envelope width in samples, centered mid-sweep.
    pub envelope_sigma: f64,
    pub dc_level: f64,
    pub noise_sigma: f64,
    pub rng_seed: u64,
    /// Upper bound on scatterer reflectivity before decay.
    #[serde(default = "default_scatterer_reflectivity")]
    pub scatterer_reflectivity: f64,
    /// Thickness in cycles of the scattering layer below the deepest boundary.
    #[serde(default = "default_substrate_thickness")]
    pub substrate_thickness: f64,
    /// Every boundary of a B-scan shifts by one offset drawn uniformly from
    /// `[−jitter, jitter]` cycles, so the sample drifts across the volume.
    #[serde(default)]
    pub bscan_depth_jitter: f64,
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_bscans == 0 || self.n_alines == 0 {
            return Err(invalid!("phantom needs at least one B-scan and one A-line"));
        }
        if self.n_samples < 4 || self.n_samples % 2 != 0 {
            return Err(invalid!(
                "n_samples must be even and >= 4, got {}",
                self.n_samples
            ));
        }
        let nyquist = self.nyquist();
        let mut previous = f64::NEG_INFINITY;
        for (j, b) in self.layer_boundaries.iter().enumerate() {
            if !(b.depth.is_finite() && b.depth >= 0.0 && b.depth < nyquist) {
                return Err(invalid!(
                    "boundary {j} depth {} outside [0, {nyquist})",
                    b.depth
                ));
            }
            if b.depth < previous {
                return Err(invalid!("boundary {j} is shallower than boundary {}", j - 1));
            }
            if !(b.reflectivity >= 0.0 && b.waviness >= 0.0) {
                return Err(invalid!("boundary {j} has negative reflectivity or waviness"));
            }
            previous = b.depth;
        }
        let non_negative = [
            ("scatterers_per_layer_density", self.scatterers_per_layer_density),
            ("axial_decay_rate", self.axial_decay_rate),
            ("dc_level", self.dc_level),
            ("noise_sigma", self.noise_sigma),
            ("scatterer_reflectivity", self.scatterer_reflectivity),
            ("substrate_thickness", self.substrate_thickness),
            ("bscan_depth_jitter", self.bscan_depth_jitter),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(self.envelope_sigma > 0.0) {
            return Err(invalid!("envelope_sigma must be > 0"));
        }
        Ok(())
    }

    /// Largest representable cycle count (exclusive).
    pub fn nyquist(&self) -> f64 {
        (self.n_samples / 2) as f64
    }
}

/// Raw interferograms, `data[(bscan·n_alines + aline)·n_samples + sample]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralVolume {
    pub n_bscans: usize,
    pub n_alines: usize,
    pub n_samples: usize,
    pub noise_floor_db: f64,
    pub data: Vec<f64>,
    pub meta: BTreeMap<String, String>,
}

impl SpectralVolume {
    pub fn new(
        n_bscans: usize,
        n_alines: usize,
        n_samples: usize,
        noise_floor_db: f64,
        data: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != n_bscans * n_alines * n_samples {
            return Err(invalid!(
                "volume {n_bscans}x{n_alines}x{n_samples} needs {} samples, got {}",
                n_bscans * n_alines * n_samples,
                data.len()
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid!("non-finite sample at index {i}"));
        }
        Ok(Self {
            n_bscans,
            n_alines,
            n_samples,
            noise_floor_db,
            data,
            meta: BTreeMap::new(),
        })
    }

    pub fn aline(&self, bscan: usize, aline: usize) -> &[f64] {
        let start = (bscan * self.n_alines + aline) * self.n_samples;
        &self.data[start..start + self.n_samples]
    }

    pub fn bscan(&self, bscan: usize) -> &[f64] {
        let len = self.n_alines * self.n_samples;
        &self.data[bscan * len..(bscan + 1) * len]
    }
}

/// Random stream for one B-scan.
pub fn bscan_rng(seed: u64, bscan_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(bscan_index as u64);
    rng
}

/// Forward model for one A-line:
/// `x[n] = E[n]·(dc + Σ a·cos(2π·c·n/N + φ)) + noise`, with a Gaussian
/// envelope `E` centered at `(N−1)/2`. An infinite `envelope_sigma` gives a
/// flat envelope.
pub fn fringe_for_aline<R: Rng + ?Sized>(
    reflectors: &[Reflector],
    n_samples: usize,
    envelope_sigma: f64,
    dc_level: f64,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n_samples < 2 {
        return Err(invalid!("fringe needs at least 2 samples"));
    }
    let nyquist = (n_samples / 2) as f64;
    for r in reflectors {
        if !(r.cycles >= 0.0 && r.cycles < nyquist) {
            return Err(invalid!(
                "reflector at {} cycles violates the bound {nyquist}",
                r.cycles
            ));
        }
    }
    let n_f = n_samples as f64;
    let center = (n_f - 1.0) / 2.0;
    let mut out = vec![dc_level; n_samples];
    for r in reflectors {
        let omega = 2.0 * PI * r.cycles / n_f;
        for (n, v) in out.iter_mut().enumerate() {
            *v += r.amplitude * libm::cos(omega * n as f64 + r.phase);
        }
    }
    if envelope_sigma.is_finite() {
        let denom = 2.0 * envelope_sigma * envelope_sigma;
        for (n, v) in out.iter_mut().enumerate() {
            let d = n as f64 - center;
            *v *= libm::exp(-d * d / denom);
        }
    }
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma)
            .map_err(|_| invalid!("bad noise sigma {noise_sigma}"))?;
        for v in out.iter_mut() {
            *v += normal.sample(rng);
        }
    }
    Ok(out)
}

/// Boundary depth per A-line for one B-scan, clipped so every boundary stays
/// at least one cycle below the previous one and inside the Nyquist bound.
fn boundary_profiles<R: Rng + ?Sized>(spec: &PhantomSpec, rng: &mut R) -> Vec<Vec<f64>> {
    let max_cycles = spec.nyquist() - 1.0;
    let mut profiles: Vec<Vec<f64>> = Vec::with_capacity(spec.layer_boundaries.len());
    let shift = if spec.bscan_depth_jitter > 0.0 {
        rng.random_range(-spec.bscan_depth_jitter..=spec.bscan_depth_jitter)
    } else {
        0.0
    };
    for (j, b) in spec.layer_boundaries.iter().enumerate() {
        let mut coeffs = [(0.0f64, 0.0f64); BOUNDARY_HARMONICS];
        for (h, slot) in coeffs.iter_mut().enumerate() {
            let amp = rng.random_range(-1.0..=1.0) * b.waviness / (h + 1) as f64;
            let phase = rng.random_range(0.0..2.0 * PI);
            *slot = (amp, phase);
        }
        let profile = (0..spec.n_alines)
            .map(|a| {
                let x = a as f64 / spec.n_alines as f64;
                let mut c = b.depth + shift;
                for (h, &(amp, phase)) in coeffs.iter().enumerate() {
                    c += amp * libm::sin(2.0 * PI * (h + 1) as f64 * x + phase);
                }
                if j > 0 {
                    c = c.max(profiles[j - 1][a] + MIN_BOUNDARY_GAP);
                }
                c.clamp(0.0, max_cycles)
            })
            .collect();
        profiles.push(profile);
    }
    profiles
}

/// Reflectors for every A-line of one B-scan: one bright reflector per
/// boundary plus random intra-layer scatterers, all scaled by
/// `exp(−axial_decay_rate·cycles)`. Scatterers never exceed the dimmest
/// boundary of their A-line.
pub fn layered_scene<R: Rng + ?Sized>(
    spec: &PhantomSpec,
    bscan_index: usize,
    rng: &mut R,
) -> Result<Vec<Vec<Reflector>>> {
    spec.validate()?;
    if bscan_index >= spec.n_bscans {
        return Err(invalid!(
            "bscan index {bscan_index} out of range (n_bscans = {})",
            spec.n_bscans
        ));
    }
    let max_cycles = spec.nyquist() - 1.0;
    let profiles = boundary_profiles(spec, rng);
    let decay = |c: f64| libm::exp(-spec.axial_decay_rate * c);
    let mut scene = Vec::with_capacity(spec.n_alines);
    for a in 0..spec.n_alines {
        let mut reflectors = Vec::new();
        let mut dimmest = f64::INFINITY;
        for (j, b) in spec.layer_boundaries.iter().enumerate() {
            let cycles = profiles[j][a];
            let amplitude = b.reflectivity * decay(cycles);
            dimmest = dimmest.min(amplitude);
            reflectors.push(Reflector {
                cycles,
                amplitude,
                phase: rng.random_range(0.0..2.0 * PI),
            });
        }
        let n_layers = spec.layer_boundaries.len();
        for j in 0..n_layers {
            let top = profiles[j][a];
            let bottom = if j + 1 < n_layers {
                profiles[j + 1][a]
            } else {
                (top + spec.substrate_thickness).min(max_cycles)
            };
            let thickness = bottom - top;
            if thickness <= 0.0 || spec.scatterers_per_layer_density == 0.0 {
                continue;
            }
            let expected = spec.scatterers_per_layer_density * thickness;
            let mut count = libm::floor(expected) as usize;
            if rng.random::<f64>() < expected - count as f64 {
                count += 1;
            }
            for _ in 0..count {
                let cycles = rng.random_range(top..bottom);
                let amplitude = (spec.scatterer_reflectivity * rng.random::<f64>() * decay(cycles))
                    .min(dimmest);
                reflectors.push(Reflector {
                    cycles,
                    amplitude,
                    phase: rng.random_range(0.0..2.0 * PI),
                });
            }
        }
        scene.push(reflectors);
    }
    Ok(scene)
}

/// Full volume plus a noise-floor estimate from reflector-free calibration lines.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<SpectralVolume> {
    spec.validate()?;
    let n = spec.n_samples;
    let mut data = Vec::with_capacity(spec.n_bscans * spec.n_alines * n);
    for b in 0..spec.n_bscans {
        let mut rng = bscan_rng(spec.rng_seed, b);
        let scene = layered_scene(spec, b, &mut rng)?;
        for reflectors in &scene {
            let fringe = fringe_for_aline(
                reflectors,
                n,
                spec.envelope_sigma,
                spec.dc_level,
                spec.noise_sigma,
                &mut rng,
            )?;
            data.extend_from_slice(&fringe);
        }
    }
    let noise_floor_db = estimate_noise_floor(spec)?;
    let mut volume = SpectralVolume::new(spec.n_bscans, spec.n_alines, n, noise_floor_db, data)?;
    volume
        .meta
        .insert("generator".to_string(), "layered-phantom".to_string());
    volume
        .meta
        .insert("rng_seed".to_string(), spec.rng_seed.to_string());
    Ok(volume)
}

/// 99th percentile of the dB amplitudes of [`CALIBRATION_ALINES`] noise-only
/// A-lines pushed through the full-spectrum chain.
pub fn estimate_noise_floor(spec: &PhantomSpec) -> Result<f64> {
    let n = spec.n_samples;
    let mut rng = bscan_rng(spec.rng_seed, 0);
    rng.set_stream(CALIBRATION_STREAM);
    let window = dsp::hann_window(n)?;
    let fft = Fft::new(n)?;
    let mut values = Vec::with_capacity(CALIBRATION_ALINES * n / 2);
    for _ in 0..CALIBRATION_ALINES {
        let noise = fringe_for_aline(&[], n, f64::INFINITY, 0.0, spec.noise_sigma, &mut rng)?;
        let mut buf: Vec<_> = noise
            .iter()
            .zip(&window)
            .map(|(&x, &w)| num_complex::Complex64::new(x * w, 0.0))
            .collect();
        fft.forward(&mut buf);
        values.extend(dsp::magnitude_db(&buf[..n / 2]));
    }
    Ok(percentile(&mut values, CALIBRATION_PERCENTILE))
}

/// Nearest-rank percentile; sorts `values` in place.
pub fn percentile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let rank = libm::ceil(q * values.len() as f64) as usize;
    values[rank.clamp(1, values.len()) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_spec() -> PhantomSpec {
        PhantomSpec {
            n_bscans: 2,
            n_alines: 16,
            n_samples: 256,
            layer_boundaries: vec![
                BoundaryCurve {
                    depth: 30.0,
                    reflectivity: 1.0,
                    waviness: 0.0,
                },
                BoundaryCurve {
                    depth: 70.0,
                    reflectivity: 1.0,
                    waviness: 0.0,
                },
            ],
            scatterers_per_layer_density: 0.0,
            axial_decay_rate: 0.01,
            envelope_sigma: 60.0,
            dc_level: 0.5,
            noise_sigma: 0.01,
            rng_seed: 7,
            scatterer_reflectivity: 0.3,
            substrate_thickness: 20.0,
            bscan_depth_jitter: 0.0,
        }
    }

    #[test]
    fn no_scatterers_means_one_reflector_per_boundary() {
        let spec = flat_spec();
        let mut rng = bscan_rng(1, 0);
        let scene = layered_scene(&spec, 0, &mut rng).unwrap();
        assert_eq!(scene.len(), 16);
        assert!(scene.iter().all(|r| r.len() == 2));
    }

    #[test]
    fn constant_boundary_hits_every_aline() {
        let mut spec = flat_spec();
        spec.layer_boundaries[0].depth = 20.0;
        spec.layer_boundaries[1].depth = 100.0;
        let scene = layered_scene(&spec, 1, &mut bscan_rng(3, 1)).unwrap();
        for refl in &scene {
            assert!(refl.iter().any(|r| r.cycles == 100.0));
        }
    }

    #[test]
    fn decay_dims_deeper_boundary() {
        let spec = flat_spec();
        let scene = layered_scene(&spec, 0, &mut bscan_rng(3, 0)).unwrap();
        for refl in &scene {
            assert!(refl[1].amplitude < refl[0].amplitude);
        }
    }

    #[test]
    fn scatterers_dimmer_than_boundaries() {
        let mut spec = flat_spec();
        spec.scatterers_per_layer_density = 0.5;
        spec.scatterer_reflectivity = 5.0;
        spec.layer_boundaries[0].waviness = 10.0;
        spec.layer_boundaries[1].waviness = 10.0;
        let scene = layered_scene(&spec, 0, &mut bscan_rng(9, 0)).unwrap();
        let nyquist = spec.nyquist();
        for refl in &scene {
            assert!(refl.len() > 2);
            let dimmest = refl[0].amplitude.min(refl[1].amplitude);
            assert!(refl[2..].iter().all(|r| r.amplitude <= dimmest));
            assert!(refl.iter().all(|r| r.cycles < nyquist));
        }
    }

    #[test]
    fn bscan_index_out_of_range() {
        let spec = flat_spec();
        assert!(layered_scene(&spec, 2, &mut bscan_rng(0, 0)).is_err());
    }

    #[test]
    fn fringe_rejects_nyquist_violation() {
        let r = Reflector {
            cycles: 64.0,
            amplitude: 1.0,
            phase: 0.0,
        };
        let err = fringe_for_aline(&[r], 128, f64::INFINITY, 0.0, 0.0, &mut bscan_rng(0, 0));
        assert!(err.is_err());
    }

    #[test]
    fn dc_only_fringe_has_only_bin_zero() {
        let x = fringe_for_aline(&[], 64, f64::INFINITY, 1.0, 0.0, &mut bscan_rng(0, 0)).unwrap();
        let spec = dsp::dft_real(&x).unwrap();
        assert!((spec[0].re - 64.0).abs() < 1e-12);
        assert!(spec[1..].iter().all(|v| dsp::abs(*v) < 1e-12));
    }

    #[test]
    fn fringe_is_deterministic() {
        let r = [Reflector {
            cycles: 10.5,
            amplitude: 1.0,
            phase: 0.3,
        }];
        let a = fringe_for_aline(&r, 128, 30.0, 0.2, 0.1, &mut bscan_rng(5, 2)).unwrap();
        let b = fringe_for_aline(&r, 128, 30.0, 0.2, 0.1, &mut bscan_rng(5, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn spec_validation() {
        let mut spec = flat_spec();
        spec.n_samples = 255;
        assert!(generate_phantom(&spec).is_err());
        let mut spec = flat_spec();
        spec.layer_boundaries.swap(0, 1);
        assert!(generate_phantom(&spec).is_err());
        let mut spec = flat_spec();
        spec.layer_boundaries[1].depth = 128.0;
        assert!(generate_phantom(&spec).is_err());
        let mut spec = flat_spec();
        spec.envelope_sigma = 0.0;
        assert!(generate_phantom(&spec).is_err());
    }

    #[test]
    fn empty_noise_free_volume_is_zero_with_floor() {
        let mut spec = flat_spec();
        spec.layer_boundaries.clear();
        spec.dc_level = 0.0;
        spec.noise_sigma = 0.0;
        let vol = generate_phantom(&spec).unwrap();
        assert!(vol.data.iter().all(|&v| v == 0.0));
        assert_eq!(vol.noise_floor_db, dsp::DB_FLOOR);
    }

    #[test]
    fn percentile_nearest_rank() {
        let mut v: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_eq!(percentile(&mut v, 0.99), 99.0);
        let mut v = vec![3.0];
        assert_eq!(percentile(&mut v, 0.99), 3.0);
    }
}
