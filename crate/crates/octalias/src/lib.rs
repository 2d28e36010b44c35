//! File formats, training loop, desk-scale studies, benchmark and command
//! line around [`octalias_core`].

pub mod bench;
pub mod cli;
pub mod error;
pub mod imageio;
pub mod inference;
pub mod manifest;
pub mod model_io;
pub mod recon_io;
pub mod report;
pub mod study;
pub mod training;
pub mod volume;

pub use error::{Error, Result};
