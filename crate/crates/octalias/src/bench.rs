//! Inference latency per B-scan as a function of batch size.

use std::time::Instant;

use octalias_core::nn::Tensor;
use octalias_core::unet::{UNetConfig, UNetModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const WARMUP_RUNS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchConfigLabel {
    pub base_channels: usize,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub batch_size: usize,
    pub runs: usize,
    pub mean_ms_per_bscan: f64,
    pub std_ms_per_bscan: f64,
    /// Set when the row was not measured, with the reason; timings are then 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEnvironment {
    pub workers: usize,
    pub precision: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfigLabel,
    pub n_depth: usize,
    pub bscan_width: usize,
    pub rows: Vec<BenchRow>,
    pub environment: BenchEnvironment,
}

impl BenchReport {
    pub fn row(&self, batch_size: usize) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.batch_size == batch_size)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub batch_sizes: Vec<usize>,
    pub runs: usize,
    pub n_depth: usize,
    pub bscan_width: usize,
    /// Batches whose estimated activation memory exceeds this are skipped.
    pub memory_limit_bytes: u64,
    pub seed: u64,
}

/// Powers of two from 1 up to `max`.
pub fn doubling_batches(max: usize) -> Vec<usize> {
    std::iter::successors(Some(1usize), |b| b.checked_mul(2))
        .take_while(|&b| b <= max)
        .collect()
}

/// Rough peak of live activations during one forward pass: each level keeps
/// its skip tensor while a few working buffers of that level are alive.
pub fn estimate_forward_bytes(config: &UNetConfig, batch: usize, rows: usize, cols: usize) -> u64 {
    let mut total = 0u64;
    for level in 1..=config.depth {
        let pixels = ((rows >> (level - 1)) * (cols >> (level - 1))) as u64;
        total += pixels * config.channels(level) as u64 * 6;
    }
    total += (rows * cols * config.in_channels) as u64;
    total * batch as u64 * 4
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Times `model.forward` on seeded random inputs of shape
/// `[batch, in_channels, n_depth, bscan_width]`.
pub fn bench(model: &UNetModel<f32>, options: &BenchOptions) -> Result<BenchReport> {
    let config = *model.config();
    let m = config.divisor();
    if options.runs == 0 {
        return Err(Error::Data("bench needs at least one timed run".into()));
    }
    if options.batch_sizes.is_empty() || options.batch_sizes.contains(&0) {
        return Err(Error::Data("batch sizes must be >= 1".into()));
    }
    if options.n_depth % m != 0 || options.bscan_width % m != 0 || options.n_depth == 0 || options.bscan_width == 0 {
        return Err(Error::Data(format!(
            "bench input {}x{} must be non-empty multiples of {m}",
            options.n_depth, options.bscan_width
        )));
    }
    let mut batches = options.batch_sizes.clone();
    batches.sort_unstable();
    batches.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut rows = Vec::with_capacity(batches.len());
    for batch in batches {
        let need = estimate_forward_bytes(&config, batch, options.n_depth, options.bscan_width);
        if need > options.memory_limit_bytes {
            rows.push(BenchRow {
                batch_size: batch,
                runs: 0,
                mean_ms_per_bscan: 0.0,
                std_ms_per_bscan: 0.0,
                skipped: Some(format!(
                    "estimated {need} bytes exceeds the {} byte limit",
                    options.memory_limit_bytes
                )),
            });
            continue;
        }
        let shape = [batch, config.in_channels, options.n_depth, options.bscan_width];
        let len = shape.iter().product();
        let data = (0..len).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let x = Tensor::from_vec(&shape, data)?;
        for _ in 0..WARMUP_RUNS {
            model.forward(&x)?;
        }
        let mut per_bscan = Vec::with_capacity(options.runs);
        for _ in 0..options.runs {
            let t = Instant::now();
            let y = model.forward(&x)?;
            let ms = t.elapsed().as_secs_f64() * 1e3;
            std::hint::black_box(&y);
            per_bscan.push(ms / batch as f64);
        }
        let (mean, std) = mean_std(&per_bscan);
        rows.push(BenchRow {
            batch_size: batch,
            runs: options.runs,
            mean_ms_per_bscan: mean,
            std_ms_per_bscan: std,
            skipped: None,
        });
    }
    Ok(BenchReport {
        config: BenchConfigLabel {
            base_channels: config.base_channels,
            depth: config.depth,
        },
        n_depth: options.n_depth,
        bscan_width: options.bscan_width,
        rows,
        environment: BenchEnvironment {
            workers: 1,
            precision: "f32".into(),
        },
    })
}
