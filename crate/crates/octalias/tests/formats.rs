use std::path::Path;

use octalias::imageio::{decode_pgm, encode_pgm16, export_image, quantize, read_pgm, ImageFormat};
use octalias::manifest::{build_dataset, load_samples, read_manifest, write_manifest, PatchParams, VolumePair};
use octalias::model_io::{decode_model, encode_model, load_model, load_model_as, save_model, ModelMeta};
use octalias::recon_io::{read_recon, write_recon, ReconSet};
use octalias::report::{read_profile, read_report, read_table, write_profile, write_report, write_table, TableRow};
use octalias::volume::{decode_raw, decode_volume, encode_raw, encode_volume, read_volume, write_volume, DType, RawVolume};
use octalias::Error;
use octalias_core::metrics::{aggregate, ImageScore};
use octalias_core::phantom::{generate_phantom, BoundaryCurve, PhantomSpec, SpectralVolume};
use octalias_core::recon::{reconstruct_ground_truth, reconstruct_undersampled, PrepMethod};
use octalias_core::unet::{UNetConfig, UNetModel};
use octalias_core::Image;
use proptest::prelude::*;

fn origin() -> &'static Path {
    Path::new("test")
}

fn small_spec(seed: u64) -> PhantomSpec {
    PhantomSpec {
        n_bscans: 2,
        n_alines: 16,
        n_samples: 64,
        layer_boundaries: vec![
            BoundaryCurve { depth: 8.0, reflectivity: 1.0, waviness: 2.0 },
            BoundaryCurve { depth: 14.0, reflectivity: 0.5, waviness: 1.0 },
        ],
        scatterers_per_layer_density: 0.5,
        axial_decay_rate: 0.02,
        envelope_sigma: 16.0,
        dc_level: 1.0,
        noise_sigma: 0.01,
        rng_seed: seed,
        scatterer_reflectivity: 0.3,
        substrate_thickness: 3.0,
        bscan_depth_jitter: 1.0,
    }
}

fn is_format_error(e: &Error) -> bool {
    matches!(e, Error::Format { .. })
}

#[test]
fn volume_roundtrips_byte_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let volume = generate_phantom(&small_spec(3)).unwrap();
    let path = dir.path().join("v.octv");
    write_volume(&volume, &path).unwrap();
    let back = read_volume(&path).unwrap();
    assert_eq!(back.data, volume.data);
    assert_eq!(back.noise_floor_db, volume.noise_floor_db);
    assert_eq!(encode_volume(&back, DType::F64).unwrap(), std::fs::read(&path).unwrap());
}

#[test]
fn f32_volumes_roundtrip_through_f32() {
    let raw = RawVolume {
        dims: [1, 2, 3],
        dtype: DType::F32,
        noise_floor_db: 70.0,
        values: vec![0.5, -1.25, 3.0, 1e-3f32 as f64, 2.0, -0.0],
    };
    let bytes = encode_raw(&raw).unwrap();
    assert_eq!(bytes.len(), 26 + 6 * 4);
    assert_eq!(decode_raw(&bytes, origin()).unwrap(), raw);
}

#[test]
fn volume_header_layout() {
    let volume = SpectralVolume::new(1, 1, 2, 70.5, vec![1.0, 2.0]).unwrap();
    let bytes = encode_volume(&volume, DType::F64).unwrap();
    assert_eq!(&bytes[..5], b"OCTV1");
    assert_eq!(&bytes[5..17], &[1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0]);
    assert_eq!(bytes[17], 1);
    assert_eq!(&bytes[18..26], &70.5f64.to_le_bytes());
    assert_eq!(&bytes[26..34], &1.0f64.to_le_bytes());
}

#[test]
fn corrupted_volumes_are_format_errors() {
    let volume = SpectralVolume::new(1, 2, 4, 70.0, (0..8).map(f64::from).collect()).unwrap();
    let good = encode_volume(&volume, DType::F64).unwrap();

    let mut bad_magic = good.clone();
    bad_magic[..5].copy_from_slice(b"XXXXX");
    let e = decode_volume(&bad_magic, origin()).unwrap_err();
    assert!(is_format_error(&e), "{e}");

    let e = decode_volume(&good[..good.len() - 3], origin()).unwrap_err();
    assert!(is_format_error(&e));
    let msg = e.to_string();
    assert!(msg.contains("64") && msg.contains("61"), "{msg}");

    let mut bad_dtype = good.clone();
    bad_dtype[17] = 9;
    assert!(is_format_error(&decode_volume(&bad_dtype, origin()).unwrap_err()));

    let mut trailing = good.clone();
    trailing.push(0);
    assert!(is_format_error(&decode_volume(&trailing, origin()).unwrap_err()));

    assert!(is_format_error(&decode_volume(&good[..10], origin()).unwrap_err()));
}

#[test]
fn pgm_roundtrip_and_layout() {
    let img = Image::new(1, 2, vec![0.0, 1.0]).unwrap();
    let bytes = encode_pgm16(&img).unwrap();
    assert_eq!(&bytes[..bytes.len() - 4], b"P5\n2 1\n65535\n");
    assert_eq!(&bytes[bytes.len() - 4..], &[0, 0, 0xff, 0xff]);

    let img = Image::from_fn(5, 7, |r, c| (r * 7 + c) as f64 * 0.37 - 3.0);
    let q = quantize(&img).unwrap();
    let back = decode_pgm(&encode_pgm16(&img).unwrap(), origin()).unwrap();
    assert_eq!(back.data(), q.iter().map(|&v| v as f64).collect::<Vec<_>>());

    let constant = Image::filled(2, 2, 5.0);
    assert!(quantize(&constant).unwrap().iter().all(|&v| v == 0));
}

#[test]
fn pgm_with_comments_and_8_bit_samples() {
    let mut bytes = b"P5\n# made by hand\n2 2\n255\n".to_vec();
    bytes.extend_from_slice(&[0, 10, 200, 255]);
    let img = decode_pgm(&bytes, origin()).unwrap();
    assert_eq!(img.data(), &[0.0, 10.0, 200.0, 255.0]);
}

#[test]
fn corrupted_pgm_is_a_format_error() {
    let good = encode_pgm16(&Image::from_fn(3, 3, |r, c| (r + c) as f64)).unwrap();
    for bad in [b"P2\n3 3\n65535\n".to_vec(), good[..good.len() - 1].to_vec(), b"P5\nx 3\n255\n".to_vec()] {
        assert!(is_format_error(&decode_pgm(&bad, origin()).unwrap_err()));
    }
}

#[test]
fn png_export_writes_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.png");
    export_image(&Image::from_fn(4, 6, |r, c| (r * c) as f64), &path, ImageFormat::Png).unwrap();
    let decoded = image::open(&path).unwrap().into_luma16();
    assert_eq!(decoded.dimensions(), (6, 4));
    assert_eq!(decoded.get_pixel(5, 3).0[0], 65535);
    assert_eq!(ImageFormat::from_path(&path), Some(ImageFormat::Png));
    let pgm = dir.path().join("a.pgm");
    export_image(&Image::from_fn(4, 6, |r, c| (r + c) as f64), &pgm, ImageFormat::Pgm16).unwrap();
    assert_eq!(read_pgm(&pgm).unwrap().get(3, 5), 65535.0);
}

fn small_model() -> UNetModel<f32> {
    UNetModel::build(UNetConfig { depth: 2, base_channels: 3, in_channels: 2, out_channels: 1 }, 5).unwrap()
}

#[test]
fn model_roundtrips_byte_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let model = small_model();
    let meta = ModelMeta {
        patch_size: Some(16),
        undersample_factor: Some(3),
        prep_method: Some(PrepMethod::Cubic),
        seed: Some(5),
    };
    let path = dir.path().join("m.octm");
    save_model(&model, &meta, &path).unwrap();
    let (back, back_meta) = load_model(&path).unwrap();
    assert_eq!(back.named_tensors(), model.named_tensors());
    assert_eq!(back_meta, meta);
    assert_eq!(encode_model(&back, &back_meta).unwrap(), std::fs::read(&path).unwrap());
}

#[test]
fn model_config_mismatch_names_the_tensor() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.octm");
    save_model(&small_model(), &ModelMeta::default(), &path).unwrap();
    let other = UNetConfig { depth: 2, base_channels: 4, in_channels: 2, out_channels: 1 };
    let msg = load_model_as(&path, other).unwrap_err().to_string();
    assert!(msg.contains("down1.conv1.weight"), "{msg}");
}

#[test]
fn corrupted_models_are_format_errors() {
    let good = encode_model(&small_model(), &ModelMeta::default()).unwrap();
    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    let header_len = u32::from_le_bytes(good[5..9].try_into().unwrap()) as usize;
    let mut bad_json = good.clone();
    bad_json[9] = b'!';
    let mut huge_header = good.clone();
    huge_header[5..9].copy_from_slice(&u32::MAX.to_le_bytes());
    let mut trailing = good.clone();
    trailing.extend_from_slice(&[0, 0, 0, 0]);
    for bad in [bad_magic, bad_json, huge_header, good[..9 + header_len + 10].to_vec(), good[..good.len() - 1].to_vec(), trailing, good[..4].to_vec()] {
        assert!(is_format_error(&decode_model(&bad, origin()).unwrap_err()));
    }
}

#[test]
fn recon_sets_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let volume = generate_phantom(&small_spec(4)).unwrap();
    let gt = ReconSet::from_ground_truth(reconstruct_ground_truth(&volume).unwrap(), "v");
    write_recon(dir.path(), "v", &gt).unwrap();
    assert_eq!(read_recon(dir.path(), "v").unwrap(), gt);
    assert!(dir.path().join("v_b001.pgm").is_file());

    let input = reconstruct_undersampled(&volume, 2, PrepMethod::Linear).unwrap();
    let set = ReconSet::from_undersampled(input, volume.noise_floor_db, "v").unwrap();
    let sub = dir.path().join("in");
    write_recon(&sub, "v", &set).unwrap();
    assert_eq!(read_recon(&sub, "v").unwrap(), set);
}

#[test]
fn manifest_roundtrips_and_reloads_samples() {
    let dir = tempfile::tempdir().unwrap();
    let volume = generate_phantom(&small_spec(6)).unwrap();
    let gt = reconstruct_ground_truth(&volume).unwrap();
    let input = reconstruct_undersampled(&volume, 2, PrepMethod::ZeroInterp).unwrap();
    let (gt_dir, in_dir) = (dir.path().join("gt"), dir.path().join("in"));
    let floor = gt.noise_floor_db;
    let gt_set = ReconSet::from_ground_truth(gt, "v");
    write_recon(&gt_dir, "v", &gt_set).unwrap();
    write_recon(&in_dir, "v", &ReconSet::from_undersampled(input.clone(), volume.noise_floor_db, "v").unwrap()).unwrap();

    let pair = VolumePair {
        ground_truth_label: gt_dir.join("v").display().to_string(),
        input_label: in_dir.join("v").display().to_string(),
        ground_truth: gt_set.complex().unwrap(),
        input: &input,
        noise_floor_db: floor,
    };
    let params = PatchParams { patch_size: 16, stride: 8, min_fraction: 0.0 };
    let (manifest, samples) = build_dataset(&[pair], params).unwrap();
    // 32 depth bins, 16 A-lines: 3 depth windows x 1 lateral window x 2 B-scans.
    assert_eq!(manifest.samples.len(), 6);
    let path = dir.path().join("manifest.json");
    write_manifest(&manifest, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let back = read_manifest(&path).unwrap();
    assert_eq!(back, manifest);
    write_manifest(&back, &path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
    let reloaded = load_samples(&back).unwrap();
    assert_eq!(reloaded.len(), samples.len());
    for (a, b) in reloaded.iter().zip(&samples) {
        assert_eq!(a.input, b.input);
        assert_eq!(a.target, b.target);
    }
    let mut broken = bytes.clone();
    broken.truncate(bytes.len() / 2);
    std::fs::write(&path, broken).unwrap();
    assert!(matches!(read_manifest(&path).unwrap_err(), Error::Json { .. }));
}

#[test]
fn reports_and_tables_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let report = aggregate(
        "Zero interpolation",
        vec![
            ImageScore { image_id: "a".into(), psnr: 20.5, ssim: 0.4 },
            ImageScore { image_id: "b".into(), psnr: 22.25, ssim: 0.5 },
        ],
    );
    let json = dir.path().join("r.json");
    write_report(&report, &json).unwrap();
    assert_eq!(read_report(&json).unwrap(), report);

    let rows = vec![TableRow::from(&report), TableRow { label: "Cubic, interpolation".into(), ..TableRow::from(&report) }];
    let csv = dir.path().join("t.csv");
    write_table(&rows, &csv).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("label,psnr_mean,psnr_std,ssim_mean,ssim_std\n"));
    assert_eq!(read_table(&csv).unwrap(), rows);

    let profile = vec![1.5, -12.0, 0.25];
    let p = dir.path().join("p.csv");
    write_profile(&profile, &p).unwrap();
    assert_eq!(read_profile(&p).unwrap(), profile);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn raw_volumes_roundtrip(b in 1usize..4, a in 1usize..5, s in 1usize..6, floor in -100.0f64..100.0, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let raw = RawVolume {
            dims: [b, a, s],
            dtype: DType::F64,
            noise_floor_db: floor,
            values: (0..b * a * s).map(|_| rng.random_range(-1e6..1e6)).collect(),
        };
        let bytes = encode_raw(&raw).unwrap();
        prop_assert_eq!(decode_raw(&bytes, origin()).unwrap(), raw);
        // Any truncation fails instead of returning partial data.
        let cut = seed as usize % bytes.len();
        prop_assert!(decode_raw(&bytes[..cut], origin()).is_err());
    }

    #[test]
    fn pgm_reparse_equals_quantized(rows in 1usize..9, cols in 1usize..9, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let img = Image::from_fn(rows, cols, |_, _| rng.random_range(-50.0..50.0));
        let back = decode_pgm(&encode_pgm16(&img).unwrap(), origin()).unwrap();
        let q: Vec<f64> = quantize(&img).unwrap().into_iter().map(f64::from).collect();
        prop_assert_eq!(back.data(), &q[..]);
    }
}
