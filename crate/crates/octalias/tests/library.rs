use octalias::bench::{bench, doubling_batches, estimate_forward_bytes, BenchOptions};
use octalias::inference::{pad_to_multiple, to_target_scale};
use octalias::recon_io::Content;
use octalias::study::{desk_phantom_spec, DeskConfig};
use octalias::training::{train, TrainOptions};
use octalias_core::dataset::{extract_patches, normalize_pair};
use octalias_core::phantom::generate_phantom;
use octalias_core::recon::{reconstruct_ground_truth, reconstruct_undersampled, PrepMethod};
use octalias_core::unet::{TrainSample, UNetConfig, UNetModel};
use octalias_core::Image;

fn tiny() -> UNetConfig {
    UNetConfig { depth: 2, base_channels: 2, in_channels: 2, out_channels: 1 }
}

fn samples() -> Vec<TrainSample> {
    let cfg = DeskConfig { n_bscans: 1, n_alines: 32, ..DeskConfig::default() };
    let volume = generate_phantom(&desk_phantom_spec(&cfg, 0)).unwrap();
    let gt = reconstruct_ground_truth(&volume).unwrap();
    let input = reconstruct_undersampled(&volume, 2, PrepMethod::ZeroInterp).unwrap();
    extract_patches(&gt.images[0], &input[0], 16, 16)
        .unwrap()
        .iter()
        .map(|p| normalize_pair(p).unwrap())
        .collect()
}

#[test]
fn training_is_deterministic_and_reports_epochs() {
    let data = samples();
    let options = TrainOptions { epochs: 2, batch_size: 3, learning_rate: 1e-3, seed: 1 };
    let run = || {
        let mut model = UNetModel::<f32>::build(tiny(), 2).unwrap();
        let mut epochs = Vec::new();
        let log = train(&mut model, &data, options, |e, _, _| {
            epochs.push(e);
            Ok(())
        })
        .unwrap();
        (model, log, epochs)
    };
    let (m1, l1, e1) = run();
    let (m2, l2, _) = run();
    assert_eq!(m1.named_tensors(), m2.named_tensors());
    assert_eq!(l1.losses(), l2.losses());
    assert_eq!(e1, vec![0, 1]);
    assert_eq!(l1.steps.len(), 2 * data.len().div_ceil(3));
    assert_eq!(l1.epoch_mean_loss.len(), 2);
}

#[test]
fn training_rejects_empty_input() {
    let mut model = UNetModel::<f32>::build(tiny(), 2).unwrap();
    assert!(train(&mut model, &[], TrainOptions::default(), |_, _, _| Ok(())).is_err());
}

#[test]
fn bench_rows_are_sorted_and_skip_over_the_limit() {
    let model = UNetModel::<f32>::build(tiny(), 2).unwrap();
    let before = model.clone();
    let mut options = BenchOptions {
        batch_sizes: vec![4, 1, 2],
        runs: 3,
        n_depth: 8,
        bscan_width: 16,
        memory_limit_bytes: u64::MAX,
        seed: 0,
    };
    let report = bench(&model, &options).unwrap();
    assert_eq!(report.rows.iter().map(|r| r.batch_size).collect::<Vec<_>>(), vec![1, 2, 4]);
    assert!(report.rows.iter().all(|r| r.runs == 3 && r.mean_ms_per_bscan > 0.0));
    assert_eq!(model, before);

    options.memory_limit_bytes = estimate_forward_bytes(model.config(), 2, 8, 16);
    let report = bench(&model, &options).unwrap();
    assert_eq!(report.rows.len(), 3);
    assert!(report.row(4).unwrap().skipped.is_some());
    assert!(report.row(2).unwrap().skipped.is_none());

    options.n_depth = 6;
    assert!(bench(&model, &options).is_err());
}

#[test]
fn doubling_batch_list() {
    assert_eq!(doubling_batches(128), vec![1, 2, 4, 8, 16, 32, 64, 128]);
    assert_eq!(doubling_batches(5), vec![1, 2, 4]);
}

#[test]
fn padding_repeats_the_edge() {
    let img = Image::from_fn(3, 5, |r, c| (10 * r + c) as f64);
    let padded = pad_to_multiple(&img, 4);
    assert_eq!((padded.rows(), padded.cols()), (4, 8));
    assert_eq!(padded.get(3, 7), img.get(2, 4));
    assert_eq!(padded.crop(0, 0, 3, 5).unwrap(), img);
}

#[test]
fn standardized_output_uses_target_statistics() {
    let target = Image::new(1, 4, vec![10.0, 20.0, 30.0, 40.0]).unwrap();
    let z = Image::new(1, 4, vec![-1.0, 0.0, 0.0, 1.0]).unwrap();
    let out = to_target_scale(&z, Content::Standardized, &target).unwrap();
    let std = 125f64.sqrt();
    assert_eq!(out.data(), &[25.0 - std, 25.0, 25.0, 25.0 + std]);
    assert_eq!(to_target_scale(&z, Content::AmplitudeDb, &target).unwrap(), z);
    assert!(to_target_scale(&Image::filled(2, 2, 0.0), Content::AmplitudeDb, &target).is_err());
}
