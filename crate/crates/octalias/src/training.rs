//! Epoch loop around [`UNetModel::train_step`].

use std::time::Instant;

use octalias_core::unet::{TrainSample, UNetModel};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Seeds the per-epoch shuffling.
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 1,
            batch_size: 3,
            learning_rate: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    /// Seconds since training started.
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub options: TrainOptions,
    pub kept_samples: usize,
    pub steps: Vec<StepRecord>,
    pub epoch_mean_loss: Vec<f64>,
    pub wall_time_s: f64,
}

impl TrainLog {
    pub fn losses(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.loss).collect()
    }
}

/// Trains for `options.epochs` epochs with a seeded shuffle per epoch. The
/// callback runs after every epoch (checkpointing, progress output).
pub fn train(
    model: &mut UNetModel<f32>,
    samples: &[TrainSample],
    options: TrainOptions,
    mut on_epoch: impl FnMut(usize, &UNetModel<f32>, &TrainLog) -> Result<()>,
) -> Result<TrainLog> {
    if samples.is_empty() {
        return Err(octalias_core::Error::InvalidArgument("training dataset is empty".into()).into());
    }
    if options.batch_size == 0 || options.epochs == 0 {
        return Err(Error::Data("epochs and batch size must be >= 1".into()));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut log = TrainLog {
        options,
        kept_samples: samples.len(),
        steps: Vec::with_capacity(options.epochs * samples.len().div_ceil(options.batch_size)),
        epoch_mean_loss: Vec::with_capacity(options.epochs),
        wall_time_s: 0.0,
    };
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut batch = Vec::with_capacity(options.batch_size);
    for epoch in 0..options.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0usize;
        for chunk in order.chunks(options.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| samples[i].clone()));
            let loss = model.train_step(&batch, options.learning_rate)?;
            log.steps.push(StepRecord {
                epoch,
                step: log.steps.len(),
                loss,
                elapsed_s: start.elapsed().as_secs_f64(),
            });
            total += loss;
            count += 1;
        }
        log.epoch_mean_loss.push(total / count as f64);
        log.wall_time_s = start.elapsed().as_secs_f64();
        on_epoch(epoch, model, &log)?;
    }
    Ok(log)
}
