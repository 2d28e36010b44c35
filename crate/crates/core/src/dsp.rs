//! Spectral primitives shared by every reconstruction path.
//!
//! The transform handles any length: powers of two go through an iterative
//! radix-2 kernel, everything else (1280, 427, ...) through Bluestein's chirp-z
//! formulation on top of a power-of-two convolution.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::error::invalid;
use crate::Result;

/// Amplitude floor used by [`magnitude_db`]; 20·log10(1e-12) = -240 dB.
pub const DB_FLOOR_AMPLITUDE: f64 = 1e-12;

/// dB value assigned to an exactly zero amplitude.
pub const DB_FLOOR: f64 = -240.0;

/// Symmetric Hann window `w[i] = 0.5·(1 − cos(2πi/(n−1)))`.
///
/// Only the first half is evaluated; the second half is mirrored so the
/// window is exactly symmetric and both endpoints are exactly zero.
pub fn hann_window(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(invalid!("hann window needs n >= 2, got {n}"));
    }
    let denom = (n - 1) as f64;
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let v = 0.5 * (1.0 - libm::cos(2.0 * PI * i as f64 / denom));
        w[i] = v;
        w[n - 1 - i] = v;
    }
    w[0] = 0.0;
    w[n - 1] = 0.0;
    Ok(w)
}

/// `20·log10(max(|z|, 1e-12))` for every element.
pub fn magnitude_db(z: &[Complex64]) -> Vec<f64> {
    z.iter().map(|&v| amplitude_to_db(abs(v))).collect()
}

#[inline]
pub fn amplitude_to_db(amplitude: f64) -> f64 {
    20.0 * libm::log10(amplitude.max(DB_FLOOR_AMPLITUDE))
}

#[inline]
pub fn abs(z: Complex64) -> f64 {
    libm::hypot(z.re, z.im)
}

/// Forward DFT, `X[k] = Σ x[n]·exp(−2πi·kn/N)`.
pub fn dft(x: &[Complex64]) -> Result<Vec<Complex64>> {
    let fft = Fft::new(x.len())?;
    let mut buf = x.to_vec();
    fft.forward(&mut buf);
    Ok(buf)
}

/// Inverse DFT with the 1/N normalization, so `idft(dft(x)) == x`.
pub fn idft(x: &[Complex64]) -> Result<Vec<Complex64>> {
    let fft = Fft::new(x.len())?;
    let mut buf = x.to_vec();
    fft.inverse(&mut buf);
    Ok(buf)
}

/// Forward DFT of a real sequence.
pub fn dft_real(x: &[f64]) -> Result<Vec<Complex64>> {
    let fft = Fft::new(x.len())?;
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.forward(&mut buf);
    Ok(buf)
}

/// A precomputed transform plan for one length. Reuse it when transforming
/// many A-lines of the same length.
#[derive(Debug, Clone)]
pub struct Fft {
    len: usize,
    plan: Plan,
}

#[derive(Debug, Clone)]
enum Plan {
    Identity,
    Radix2(Radix2),
    Bluestein(Box<Bluestein>),
}

impl Fft {
    pub fn new(len: usize) -> Result<Self> {
        let plan = match len {
            0 => return Err(invalid!("transform length must be >= 1")),
            1 => Plan::Identity,
            n if n.is_power_of_two() => Plan::Radix2(Radix2::new(n)),
            n => Plan::Bluestein(Box::new(Bluestein::new(n))),
        };
        Ok(Self { len, plan })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// In-place forward transform. Panics if `buf.len() != self.len()`.
    pub fn forward(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.len, "buffer length does not match plan");
        match &self.plan {
            Plan::Identity => {}
            Plan::Radix2(r) => r.process(buf),
            Plan::Bluestein(b) => b.process(buf),
        }
    }

    /// In-place inverse transform including the 1/N scale.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        for v in buf.iter_mut() {
            *v = v.conj();
        }
        self.forward(buf);
        let scale = 1.0 / self.len as f64;
        for v in buf.iter_mut() {
            *v = v.conj() * scale;
        }
    }
}

/// `exp(−2πi·num/den)` with the angle reduced exactly in integers first.
#[inline]
fn unit_root(num: usize, den: usize) -> Complex64 {
    let r = (num % den) as f64 / den as f64;
    let theta = -2.0 * PI * r;
    Complex64::new(libm::cos(theta), libm::sin(theta))
}

#[derive(Debug, Clone)]
struct Radix2 {
    len: usize,
    // twiddles[k] = exp(-2πik/len), k < len/2
    twiddles: Vec<Complex64>,
}

impl Radix2 {
    fn new(len: usize) -> Self {
        let twiddles = (0..len / 2).map(|k| unit_root(k, len)).collect();
        Self { len, twiddles }
    }

    fn process(&self, buf: &mut [Complex64]) {
        let n = self.len;
        let bits = n.trailing_zeros();
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                buf.swap(i, j);
            }
        }
        let mut half = 1;
        while half < n {
            let step = n / (2 * half);
            for chunk in buf.chunks_exact_mut(2 * half) {
                let (lo, hi) = chunk.split_at_mut(half);
                for k in 0..half {
                    let t = hi[k] * self.twiddles[k * step];
                    hi[k] = lo[k] - t;
                    lo[k] += t;
                }
            }
            half *= 2;
        }
    }
}

#[derive(Debug, Clone)]
struct Bluestein {
    len: usize,
    inner: Radix2,
    // chirp[n] = exp(-iπ n²/len)
    chirp: Vec<Complex64>,
    // forward transform of the conjugate-chirp convolution kernel, pre-scaled by 1/m
    kernel: Vec<Complex64>,
}

impl Bluestein {
    fn new(len: usize) -> Self {
        let m = (2 * len - 1).next_power_of_two();
        let inner = Radix2::new(m);
        // exp(-iπn²/N) = exp(-2πi·n²/(2N)); reduce n² mod 2N in integers.
        let chirp: Vec<Complex64> = (0..len)
            .map(|n| unit_root((n * n) % (2 * len), 2 * len))
            .collect();
        let mut kernel = vec![Complex64::new(0.0, 0.0); m];
        kernel[0] = chirp[0].conj();
        for n in 1..len {
            let c = chirp[n].conj();
            kernel[n] = c;
            kernel[m - n] = c;
        }
        inner.process(&mut kernel);
        let scale = 1.0 / m as f64;
        for v in kernel.iter_mut() {
            *v *= scale;
        }
        Self {
            len,
            inner,
            chirp,
            kernel,
        }
    }

    fn process(&self, buf: &mut [Complex64]) {
        let m = self.inner.len;
        let mut work = vec![Complex64::new(0.0, 0.0); m];
        for ((w, &x), &c) in work.iter_mut().zip(buf.iter()).zip(&self.chirp) {
            *w = x * c;
        }
        self.inner.process(&mut work);
        for (w, &k) in work.iter_mut().zip(&self.kernel) {
            // conjugate so the second forward pass acts as an inverse
            *w = (*w * k).conj();
        }
        self.inner.process(&mut work);
        for ((out, w), &c) in buf.iter_mut().zip(&work).zip(&self.chirp).take(self.len) {
            *out = w.conj() * c;
        }
    }
}
