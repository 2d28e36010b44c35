//! Desk-scale experiments on synthetic phantoms: train on some volumes,
//! score input and network output on held-out ones.

use octalias_core::dataset::ChannelStats;
use octalias_core::metrics::{evaluate_pairs, MetricsReport, SsimParams};
use octalias_core::phantom::{generate_phantom, BoundaryCurve, PhantomSpec, SpectralVolume};
use octalias_core::recon::{method_label, reconstruct_ground_truth, reconstruct_undersampled, BScanImage, GroundTruth, PrepMethod};
use octalias_core::unet::{UNetConfig, UNetModel};
use octalias_core::Image;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::inference::{eval_pairs, input_display_images, predict_standardized};
use crate::manifest::{build_dataset, PatchParams, VolumePair};
use crate::recon_io::Content;
use crate::report::TableRow;
use crate::training::{train, TrainOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeskConfig {
    pub n_samples: usize,
    pub n_bscans: usize,
    pub n_alines: usize,
    pub train_volumes: usize,
    pub test_volumes: usize,
    pub patch_size: usize,
    pub stride: usize,
    pub min_fraction: f64,
    pub network: UNetConfig,
    pub train: TrainOptions,
    pub seed: u64,
}

impl Default for DeskConfig {
    /// 128 spectral samples give 64 depth bins, so one 64×64 patch covers the
    /// whole depth range.
    fn default() -> Self {
        Self {
            n_samples: 128,
            n_bscans: 12,
            n_alines: 256,
            train_volumes: 5,
            test_volumes: 3,
            patch_size: 64,
            stride: 32,
            min_fraction: 0.01,
            network: UNetConfig {
                depth: 3,
                base_channels: 8,
                in_channels: 2,
                out_channels: 1,
            },
            train: TrainOptions {
                epochs: 10,
                batch_size: 3,
                learning_rate: 1e-3,
                seed: 7,
            },
            seed: 2024,
        }
    }
}

/// A three-surface phantom whose depths, waviness and reflectivities are
/// drawn from `(seed, volume_index)`.
pub fn desk_phantom_spec(cfg: &DeskConfig, volume_index: usize) -> PhantomSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(volume_index as u64 + 1);
    let nyq = (cfg.n_samples / 2) as f64;
    let d1 = nyq * rng.random_range(0.22..0.32);
    let d2 = d1 + nyq * rng.random_range(0.08..0.16);
    let d3 = d2 + nyq * rng.random_range(0.08..0.16);
    let boundary = |depth: f64, reflectivity: f64, rng: &mut ChaCha8Rng| BoundaryCurve {
        depth,
        reflectivity,
        waviness: nyq * rng.random_range(0.06..0.12),
    };
    let layer_boundaries = vec![
        boundary(d1, 1.0, &mut rng),
        boundary(d2, rng.random_range(0.4..0.8), &mut rng),
        boundary(d3, rng.random_range(0.3..0.6), &mut rng),
    ];
    PhantomSpec {
        n_bscans: cfg.n_bscans,
        n_alines: cfg.n_alines,
        n_samples: cfg.n_samples,
        layer_boundaries,
        scatterers_per_layer_density: 0.5,
        axial_decay_rate: 0.02 * 64.0 / nyq,
        envelope_sigma: cfg.n_samples as f64 / 4.0,
        dc_level: 1.0,
        noise_sigma: 0.015,
        rng_seed: cfg.seed.wrapping_mul(1_000_003).wrapping_add(volume_index as u64),
        scatterer_reflectivity: 0.3,
        substrate_thickness: nyq * 0.1,
        bscan_depth_jitter: nyq * 0.1,
    }
}

/// A generated volume and its ground-truth reconstruction.
pub struct PhantomVolume {
    pub name: String,
    pub volume: SpectralVolume,
    pub ground_truth: GroundTruth,
}

pub fn generate_volume(cfg: &DeskConfig, volume_index: usize) -> Result<PhantomVolume> {
    let volume = generate_phantom(&desk_phantom_spec(cfg, volume_index))?;
    let ground_truth = reconstruct_ground_truth(&volume)?;
    Ok(PhantomVolume {
        name: format!("vol{volume_index:02}"),
        volume,
        ground_truth,
    })
}

/// Training volumes first, then held-out test volumes.
pub fn generate_split(cfg: &DeskConfig) -> Result<(Vec<PhantomVolume>, Vec<PhantomVolume>)> {
    let all = (0..cfg.train_volumes + cfg.test_volumes)
        .map(|i| generate_volume(cfg, i))
        .collect::<Result<Vec<_>>>()?;
    let mut train = all;
    let test = train.split_off(cfg.train_volumes);
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub kept_samples: usize,
    pub removed_blanks: usize,
    pub steps: usize,
    pub first_epoch_loss: f64,
    pub last_epoch_loss: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub undersample_factor: usize,
    pub prep_method: PrepMethod,
    pub input: MetricsReport,
    pub output: MetricsReport,
    pub training: TrainSummary,
}

impl ExperimentReport {
    pub fn psnr_gain(&self) -> f64 {
        self.output.psnr_mean - self.input.psnr_mean
    }

    pub fn ssim_gain(&self) -> f64 {
        self.output.ssim_mean - self.input.ssim_mean
    }
}

pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub model: UNetModel<f32>,
    /// First test B-scan: input amplitude and prediction, both in target dB.
    pub sample_input_db: Image,
    pub sample_output_db: Image,
}

fn undersample_all(volumes: &[PhantomVolume], factor: usize, method: PrepMethod) -> Result<Vec<Vec<BScanImage>>> {
    volumes
        .iter()
        .map(|v| Ok(reconstruct_undersampled(&v.volume, factor, method)?))
        .collect()
}

/// Trains one model for `(factor, method)` and scores it on `test`.
pub fn run_experiment(
    cfg: &DeskConfig,
    train_set: &[PhantomVolume],
    test_set: &[PhantomVolume],
    factor: usize,
    method: PrepMethod,
) -> Result<ExperimentOutcome> {
    let train_inputs = undersample_all(train_set, factor, method)?;
    let pairs: Vec<VolumePair<'_>> = train_set
        .iter()
        .zip(&train_inputs)
        .map(|(v, input)| VolumePair {
            ground_truth_label: v.name.clone(),
            input_label: v.name.clone(),
            ground_truth: &v.ground_truth.images,
            input,
            noise_floor_db: v.ground_truth.noise_floor_db,
        })
        .collect();
    let params = PatchParams {
        patch_size: cfg.patch_size,
        stride: cfg.stride,
        min_fraction: cfg.min_fraction,
    };
    let (manifest, samples) = build_dataset(&pairs, params)?;
    let mut model = UNetModel::<f32>::build(cfg.network, cfg.seed)?;
    let log = train(&mut model, &samples, cfg.train, |_, _, _| Ok(()))?;

    let test_inputs = undersample_all(test_set, factor, method)?;
    let mut input_pairs = Vec::new();
    let mut output_pairs = Vec::new();
    for (v, inputs) in test_set.iter().zip(&test_inputs) {
        let targets: Vec<Image> = v.ground_truth.images.iter().map(BScanImage::amplitude_image).collect();
        let amplitudes = input_display_images(inputs)?;
        let predictions = inputs
            .iter()
            .map(|b| predict_standardized(&model, b))
            .collect::<Result<Vec<_>>>()?;
        let floor = v.ground_truth.noise_floor_db;
        input_pairs.extend(eval_pairs(&v.name, &amplitudes, Content::AmplitudeDb, &targets, floor)?);
        output_pairs.extend(eval_pairs(&v.name, &predictions, Content::Standardized, &targets, floor)?);
    }
    let label = method_label(method);
    let params = SsimParams::default();
    let input = evaluate_pairs(&input_pairs, &format!("{label} (input)"), params)?;
    let output = evaluate_pairs(&output_pairs, &label, params)?;
    let report = ExperimentReport {
        undersample_factor: factor,
        prep_method: method,
        input,
        output,
        training: TrainSummary {
            kept_samples: manifest.samples.len(),
            removed_blanks: manifest.removed_blanks,
            steps: log.steps.len(),
            first_epoch_loss: log.epoch_mean_loss[0],
            last_epoch_loss: *log.epoch_mean_loss.last().expect("at least one epoch"),
            wall_time_s: log.wall_time_s,
        },
    };
    Ok(ExperimentOutcome {
        report,
        model,
        sample_input_db: input_pairs[0].output_db.clone(),
        sample_output_db: output_pairs[0].output_db.clone(),
    })
}

/// Largest absolute difference between two same-shaped images.
pub fn max_abs_diff(a: &Image, b: &Image) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Standardized copy, for comparing images irrespective of dB offsets.
pub fn standardized(image: &Image) -> Result<Image> {
    let s = ChannelStats::of(image.data(), "image")?;
    Ok(Image::new(
        image.rows(),
        image.cols(),
        image.data().iter().map(|&v| s.standardize(v)).collect(),
    )?)
}

/// Trains one model per interpolation method on the same volumes and scores
/// each on the shared test set.
pub fn interpolation_study(
    cfg: &DeskConfig,
    train_set: &[PhantomVolume],
    test_set: &[PhantomVolume],
    factor: usize,
) -> Result<Vec<ExperimentOutcome>> {
    PrepMethod::INTERPOLATORS
        .iter()
        .map(|&m| run_experiment(cfg, train_set, test_set, factor, m))
        .collect()
}

/// One row per method with the network-output scores.
pub fn output_table(reports: &[ExperimentReport]) -> Vec<TableRow> {
    reports.iter().map(|r| TableRow::from(&r.output)).collect()
}

/// One row per method with the scores of the undersampled input.
pub fn input_table(reports: &[ExperimentReport]) -> Vec<TableRow> {
    reports.iter().map(|r| TableRow::from(&r.input)).collect()
}
