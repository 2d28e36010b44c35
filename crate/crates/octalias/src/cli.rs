//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 usage error, 2 data, format or I/O error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use octalias_core::metrics::{evaluate_pairs, spectrum_profile, SsimParams};
use octalias_core::phantom::{generate_phantom, PhantomSpec};
use octalias_core::recon::{parse_factor, reconstruct_ground_truth, reconstruct_undersampled, PrepMethod};
use octalias_core::unet::{UNetConfig, UNetModel};

use crate::bench::{bench, BenchOptions};
use crate::error::{read_json, write_json, Error, Result};
use crate::imageio::read_pgm;
use crate::inference::{eval_pairs, input_display_images, predict_standardized};
use crate::manifest::{build_dataset_from_dirs, load_samples, read_manifest, write_manifest, PatchParams};
use crate::model_io::{load_model, save_model, ModelMeta};
use crate::recon_io::{list_recon_stems, read_recon, write_recon, Content, ReconData, ReconKind, ReconMeta, ReconSet};
use crate::report::{write_profile, write_report_auto};
use crate::training::{train, TrainOptions};
use crate::volume::{read_volume, write_volume};

#[derive(Debug, Parser)]
#[command(name = "octalias", version, about = "De-aliasing of spectrally undersampled SS-OCT data")]
struct Cli {
    /// Seed for every random choice of the subcommand.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic spectral volume from a phantom spec.
    Simulate(SimulateArgs),
    /// Reconstruct B-scans from a spectral volume.
    Reconstruct(ReconstructArgs),
    /// Cut training patch pairs and write a manifest.
    Dataset(DatasetArgs),
    /// Train a network on a manifest.
    Train(TrainArgs),
    /// Run a trained network on an undersampled reconstruction of a volume.
    Infer(InferArgs),
    /// Score predictions or inputs against ground truth.
    Eval(EvalArgs),
    /// Averaged spatial-frequency profile along depth of an image.
    Spectrum(SpectrumArgs),
    /// Time inference per B-scan over batch sizes.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Phantom spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Output volume (.octv).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReconstructArgs {
    /// Spectral volume (.octv).
    #[arg(long = "in")]
    input: PathBuf,
    /// 1 for the full-spectrum ground truth, 2 or 3 for undersampling.
    #[arg(long, value_parser = parse_factor_arg)]
    factor: usize,
    /// Interpolation for factors 2 and 3.
    #[arg(long, default_value = "zero_interp", value_parser = parse_method_arg)]
    method: PrepMethod,
    #[arg(long)]
    out_dir: PathBuf,
    /// Output name; defaults to the input file stem.
    #[arg(long)]
    stem: Option<String>,
}

#[derive(Debug, Args)]
struct DatasetArgs {
    #[arg(long)]
    gt_dir: PathBuf,
    #[arg(long)]
    in_dir: PathBuf,
    #[arg(long, default_value_t = 640)]
    patch: usize,
    #[arg(long, default_value_t = 640)]
    stride: usize,
    /// Minimum fraction of ground-truth pixels above the noise floor.
    #[arg(long, default_value_t = 0.01)]
    min_fraction: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 5)]
    depth: usize,
    #[arg(long, default_value_t = 48)]
    base: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 3)]
    batch: usize,
    #[arg(long, default_value_t = 1)]
    epochs: usize,
    /// Expected undersampling factor; must match the manifest.
    #[arg(long, value_parser = parse_factor_arg)]
    factor: Option<usize>,
    /// Expected prep method; must match the manifest.
    #[arg(long, value_parser = parse_method_arg)]
    method: Option<PrepMethod>,
    #[arg(long)]
    out: PathBuf,
    /// Per-step loss log (JSON).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    /// Spectral volume (.octv).
    #[arg(long = "in")]
    input: PathBuf,
    /// Defaults to the factor the model was trained on.
    #[arg(long, value_parser = parse_factor_arg)]
    factor: Option<usize>,
    /// Defaults to the method the model was trained on.
    #[arg(long, value_parser = parse_method_arg)]
    method: Option<PrepMethod>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    stem: Option<String>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Predictions or undersampled inputs.
    #[arg(long)]
    pred_dir: PathBuf,
    #[arg(long)]
    gt_dir: PathBuf,
    /// Gating level; defaults to each ground truth's stored floor.
    #[arg(long)]
    noise_floor_db: Option<f64>,
    #[arg(long, default_value = "output")]
    label: String,
    /// `.json` for the full report, `.csv` for a table row.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SpectrumArgs {
    /// Image (.pgm).
    #[arg(long)]
    image: PathBuf,
    /// Column range `a:b` (end exclusive); defaults to all columns.
    #[arg(long, value_parser = parse_cols)]
    cols: Option<(usize, usize)>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated batch sizes.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4, 8, 16, 32, 64, 128])]
    batches: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    /// A-lines per B-scan.
    #[arg(long, default_value_t = 512)]
    width: usize,
    /// Depth pixels; defaults to the model's training patch size.
    #[arg(long)]
    n_depth: Option<usize>,
    /// Batches estimated to need more activation memory are skipped.
    #[arg(long, default_value_t = 4096)]
    memory_limit_mb: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_factor_arg(s: &str) -> std::result::Result<usize, String> {
    parse_factor(s).map_err(|e| e.to_string())
}

fn parse_method_arg(s: &str) -> std::result::Result<PrepMethod, String> {
    s.parse::<PrepMethod>().map_err(|e| e.to_string())
}

fn parse_cols(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected a:b, got {s:?}"))?;
    let a = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let b = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
    Ok((a, b))
}

fn file_stem(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| Error::Data(format!("{}: cannot derive an output name", path.display())))
}

fn simulate(args: SimulateArgs, seed: Option<u64>) -> Result<()> {
    let mut spec: PhantomSpec = read_json(&args.spec)?;
    if let Some(seed) = seed {
        spec.rng_seed = seed;
    }
    let volume = generate_phantom(&spec)?;
    write_volume(&volume, &args.out)?;
    println!(
        "wrote {} ({} B-scans x {} A-lines x {} samples, noise floor {:.2} dB)",
        args.out.display(),
        volume.n_bscans,
        volume.n_alines,
        volume.n_samples,
        volume.noise_floor_db
    );
    Ok(())
}

fn reconstruct(args: ReconstructArgs) -> Result<()> {
    let volume = read_volume(&args.input)?;
    let stem = match args.stem {
        Some(s) => s,
        None => file_stem(&args.input)?,
    };
    let source = args.input.display().to_string();
    let set = if args.factor == 1 {
        ReconSet::from_ground_truth(reconstruct_ground_truth(&volume)?, &source)
    } else {
        let images = reconstruct_undersampled(&volume, args.factor, args.method)?;
        ReconSet::from_undersampled(images, volume.noise_floor_db, &source)?
    };
    write_recon(&args.out_dir, &stem, &set)?;
    println!(
        "wrote {}/{stem} ({} B-scans, {} depth x {} A-lines)",
        args.out_dir.display(),
        set.meta.n_bscans,
        set.meta.n_depth,
        set.meta.n_alines
    );
    Ok(())
}

fn dataset(args: DatasetArgs) -> Result<()> {
    let params = PatchParams {
        patch_size: args.patch,
        stride: args.stride,
        min_fraction: args.min_fraction,
    };
    let (manifest, _) = build_dataset_from_dirs(&args.gt_dir, &args.in_dir, params)?;
    write_manifest(&manifest, &args.out)?;
    println!(
        "wrote {}: {} samples, {} blank pairs removed, {} degenerate pairs skipped",
        args.out.display(),
        manifest.samples.len(),
        manifest.removed_blanks,
        manifest.skipped_degenerate
    );
    Ok(())
}

fn train_cmd(args: TrainArgs, seed: Option<u64>) -> Result<()> {
    let manifest = read_manifest(&args.manifest)?;
    if let Some(f) = args.factor.filter(|&f| f != manifest.undersample_factor) {
        return Err(Error::Data(format!(
            "--factor {f} disagrees with the manifest ({}x)",
            manifest.undersample_factor
        )));
    }
    if let Some(m) = args.method.filter(|&m| m != manifest.prep_method) {
        return Err(Error::Data(format!(
            "--method {m} disagrees with the manifest ({})",
            manifest.prep_method
        )));
    }
    let config = UNetConfig {
        depth: args.depth,
        base_channels: args.base,
        in_channels: 2,
        out_channels: 1,
    };
    config.validate()?;
    if manifest.patch_size % config.divisor() != 0 {
        return Err(Error::Data(format!(
            "patch size {} is not divisible by {} (network depth {})",
            manifest.patch_size,
            config.divisor(),
            config.depth
        )));
    }
    let seed = seed.unwrap_or(0);
    let samples = load_samples(&manifest)?;
    let mut model = UNetModel::<f32>::build(config, seed)?;
    let options = TrainOptions {
        epochs: args.epochs,
        batch_size: args.batch,
        learning_rate: args.lr,
        seed,
    };
    let meta = ModelMeta {
        patch_size: Some(manifest.patch_size),
        undersample_factor: Some(manifest.undersample_factor),
        prep_method: Some(manifest.prep_method),
        seed: Some(seed),
    };
    let log = train(&mut model, &samples, options, |epoch, model, log| {
        println!("epoch {} mean L1 {:.6}", epoch + 1, log.epoch_mean_loss[epoch]);
        save_model(model, &meta, &args.out)
    })?;
    if let Some(path) = &args.log {
        write_json(path, &log)?;
    }
    println!(
        "wrote {} after {} steps in {:.1} s",
        args.out.display(),
        log.steps.len(),
        log.wall_time_s
    );
    Ok(())
}

fn infer(args: InferArgs) -> Result<()> {
    let (model, meta) = load_model(&args.model)?;
    let factor = args.factor.or(meta.undersample_factor).unwrap_or(2);
    let method = args.method.or(meta.prep_method).unwrap_or(PrepMethod::ZeroInterp);
    if factor == 1 {
        return Err(Error::Data("inference needs an undersampling factor of 2 or 3".into()));
    }
    let volume = read_volume(&args.input)?;
    let stem = match args.stem {
        Some(s) => s,
        None => file_stem(&args.input)?,
    };
    let inputs = reconstruct_undersampled(&volume, factor, method)?;
    let predictions = inputs
        .iter()
        .map(|b| predict_standardized(&model, b))
        .collect::<Result<Vec<_>>>()?;
    let first = &predictions[0];
    let set = ReconSet {
        meta: ReconMeta {
            kind: ReconKind::Prediction,
            content: Content::Standardized,
            undersample_factor: factor,
            prep_method: method,
            n_bscans: predictions.len(),
            n_depth: first.rows(),
            n_alines: first.cols(),
            noise_floor_db: volume.noise_floor_db,
            background_db: None,
            source: args.input.display().to_string(),
        },
        data: ReconData::Real(predictions),
    };
    write_recon(&args.out_dir, &stem, &set)?;
    println!("wrote {}/{stem} ({} B-scans)", args.out_dir.display(), set.meta.n_bscans);
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let mut pairs = Vec::new();
    for stem in list_recon_stems(&args.pred_dir)? {
        let pred = read_recon(&args.pred_dir, &stem)?;
        let gt = read_recon(&args.gt_dir, &stem)?;
        if gt.meta.kind != ReconKind::GroundTruth {
            return Err(Error::Data(format!(
                "{}/{stem} is not a ground-truth reconstruction",
                args.gt_dir.display()
            )));
        }
        let targets = gt.images();
        let floor = args.noise_floor_db.unwrap_or(gt.meta.noise_floor_db);
        let (images, content) = match (pred.meta.kind, &pred.data) {
            (ReconKind::UndersampledInput, ReconData::Complex(b)) => (input_display_images(b)?, Content::AmplitudeDb),
            _ => (pred.images(), pred.meta.content),
        };
        pairs.extend(eval_pairs(&stem, &images, content, &targets, floor)?);
    }
    let report = evaluate_pairs(&pairs, &args.label, SsimParams::default())?;
    write_report_auto(&report, &args.out)?;
    println!(
        "{}: PSNR {:.4} ± {:.4} dB, SSIM {:.4} ± {:.4} over {} images",
        report.method_label,
        report.psnr_mean,
        report.psnr_std,
        report.ssim_mean,
        report.ssim_std,
        report.per_image.len()
    );
    Ok(())
}

fn spectrum(args: SpectrumArgs) -> Result<()> {
    let image = read_pgm(&args.image)?;
    let (start, end) = args.cols.unwrap_or((0, image.cols()));
    let profile = spectrum_profile(&image, start, end)?;
    write_profile(&profile, &args.out)?;
    println!("wrote {} ({} bins)", args.out.display(), profile.len());
    Ok(())
}

fn bench_cmd(args: BenchArgs, seed: Option<u64>) -> Result<()> {
    let (model, meta) = load_model(&args.model)?;
    let options = BenchOptions {
        batch_sizes: args.batches,
        runs: args.runs,
        n_depth: args.n_depth.or(meta.patch_size).unwrap_or(64),
        bscan_width: args.width,
        memory_limit_bytes: args.memory_limit_mb.saturating_mul(1 << 20),
        seed: seed.unwrap_or(0),
    };
    let report = bench(&model, &options)?;
    write_json(&args.out, &report)?;
    for row in &report.rows {
        match &row.skipped {
            Some(reason) => println!("batch {:>4}: skipped ({reason})", row.batch_size),
            None => println!(
                "batch {:>4}: {:.3} ± {:.3} ms per B-scan over {} runs",
                row.batch_size, row.mean_ms_per_bscan, row.std_ms_per_bscan, row.runs
            ),
        }
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a, cli.seed),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Dataset(a) => dataset(a),
        Command::Train(a) => train_cmd(a, cli.seed),
        Command::Infer(a) => infer(a),
        Command::Eval(a) => eval(a),
        Command::Spectrum(a) => spectrum(a),
        Command::Bench(a) => bench_cmd(a, cli.seed),
    }
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
