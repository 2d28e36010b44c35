//! Core algorithms for de-aliasing spectrally undersampled swept-source OCT.
//!
//! Everything in this crate is a pure computation over in-memory buffers:
//!
//! * [`dsp`]: Hann window, arbitrary-length DFT, dB conversion.
//! * [`phantom`]: synthetic layered interferogram volumes with known structure.
//! * [`recon`]: full-spectrum and undersampled A-line reconstruction.
//! * [`nn`]: the small tensor engine (3×3 conv, Leaky ReLU, pooling, bilinear
//!   upsampling, L1 loss) with hand-written backward passes and Adam.
//! * [`unet`]: the encoder–decoder built from those operators.
//! * [`metrics`]: noise-gated PSNR/SSIM and spatial-frequency profiles.
//! * [`dataset`]: patch extraction, blank removal and per-channel standardization.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the training loop,
//! benchmarks and the command line live in the `octalias` crate.
#![no_std]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod dataset;
pub mod dsp;
mod error;
pub mod image;
pub mod metrics;
pub mod nn;
pub mod phantom;
pub mod recon;
pub mod unet;

pub use error::{Error, Result};
pub use image::Image;
