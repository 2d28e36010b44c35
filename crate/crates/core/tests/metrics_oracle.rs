use octalias_core::metrics::{evaluate_pairs, mse, psnr_from_mse, prepare_for_metrics, psnr, spectrum_profile, ssim, EvalPair, SsimParams};
use octalias_core::Image;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Image {
    Image::from_fn(rows, cols, |_, _| rng.random_range(0.0..1.0))
}

fn brute_mse(a: &Image, b: &Image) -> f64 {
    let mut s = 0.0;
    for r in 0..a.rows() {
        for c in 0..a.cols() {
            let d = a.get(r, c) - b.get(r, c);
            s += d * d;
        }
    }
    s / (a.rows() * a.cols()) as f64
}

fn brute_ssim(a: &Image, b: &Image, c1: f64, c2: f64) -> f64 {
    let n = (a.rows() * a.cols()) as f64;
    let (mut ma, mut mb) = (0.0, 0.0);
    for r in 0..a.rows() {
        for c in 0..a.cols() {
            ma += a.get(r, c);
            mb += b.get(r, c);
        }
    }
    ma /= n;
    mb /= n;
    let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
    for r in 0..a.rows() {
        for c in 0..a.cols() {
            let (x, y) = (a.get(r, c) - ma, b.get(r, c) - mb);
            va += x * x;
            vb += y * y;
            cov += x * y;
        }
    }
    va /= n;
    vb /= n;
    cov /= n;
    (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
}

#[test]
fn metrics_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = SsimParams::default();
    for i in 0..50 {
        let (rows, cols) = (2 + i % 7, 3 + i % 5);
        let a = random_image(rows, cols, &mut rng);
        let b = random_image(rows, cols, &mut rng);
        let m = brute_mse(&a, &b);
        assert!((mse(&a, &b).unwrap() - m).abs() < 1e-12);
        assert!((psnr(&a, &b, 1.0).unwrap() - 10.0 * (1.0 / m).log10()).abs() < 1e-12);
        assert!((ssim(&a, &b, p).unwrap() - brute_ssim(&a, &b, p.c1, p.c2)).abs() < 1e-12);
    }
}

#[test]
fn fixed_values() {
    let a = random_image(4, 4, &mut ChaCha8Rng::seed_from_u64(1));
    assert!((ssim(&a, &a, SsimParams::default()).unwrap() - 1.0).abs() < 1e-15);
    assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
    let zeros = Image::filled(10, 10, 0.0);
    let tenth = Image::filled(10, 10, 0.1);
    assert!((mse(&zeros, &tenth).unwrap() - 0.01).abs() < 1e-17);
    assert_eq!(psnr_from_mse(0.01, 1.0), 20.0);
    assert!((psnr(&zeros, &tenth, 1.0).unwrap() - 20.0).abs() < 1e-12);
    // Exactly representable: a difference of 0.5 everywhere gives mse 0.25.
    assert_eq!(psnr(&zeros, &Image::filled(10, 10, 0.5), 2.0).unwrap(), 10.0 * 16f64.log10());
    assert_eq!(mse(&zeros, &Image::filled(10, 10, 1.0)).unwrap(), 1.0);
}

#[test]
fn hand_evaluated_two_by_two() {
    let a = Image::new(2, 2, vec![0.0, 0.5, 1.0, 0.5]).unwrap();
    let b = Image::new(2, 2, vec![0.25, 0.5, 0.75, 1.0]).unwrap();
    // μa = 0.5, μb = 0.625, σa² = 0.125, σb² = 0.078125, σab = 0.0625
    let (c1, c2) = (1e-4, 9e-4);
    let want = (2.0 * 0.5 * 0.625 + c1) * (2.0 * 0.0625 + c2)
        / ((0.25 + 0.390625 + c1) * (0.125 + 0.078125 + c2));
    assert!((ssim(&a, &b, SsimParams::default()).unwrap() - want).abs() < 1e-12);
}

#[test]
fn shape_mismatch_is_an_error() {
    let a = Image::filled(2, 2, 0.0);
    let b = Image::filled(2, 3, 0.0);
    assert!(mse(&a, &b).is_err());
    assert!(psnr(&a, &b, 1.0).is_err());
    assert!(ssim(&a, &b, SsimParams::default()).is_err());
}

#[test]
fn gating_and_mapping() {
    let target = Image::new(1, 3, vec![70.0, 95.0, 120.0]).unwrap();
    let output = Image::new(1, 3, vec![60.0, 95.0, 130.0]).unwrap();
    let (o, t) = prepare_for_metrics(&output, &target, 70.0).unwrap();
    assert_eq!(t.data(), &[0.0, 0.5, 1.0]);
    assert_eq!(o.data(), &[0.0, 0.5, 1.0]);
    let blank = Image::filled(2, 2, 50.0);
    assert!(prepare_for_metrics(&blank, &blank, 70.0).is_err());
}

#[test]
fn report_aggregates_per_image_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pairs: Vec<EvalPair> = (0..4)
        .map(|i| {
            let t = Image::from_fn(6, 6, |r, c| 70.0 + 10.0 * ((r * 6 + c) % 5) as f64);
            let o = Image::from_fn(6, 6, |r, c| t.get(r, c) + rng.random_range(-3.0..3.0));
            EvalPair {
                image_id: format!("img{i}"),
                output_db: o,
                target_db: t,
                noise_floor_db: 70.0,
            }
        })
        .collect();
    let report = evaluate_pairs(&pairs, "x", SsimParams::default()).unwrap();
    let psnrs: Vec<f64> = report.per_image.iter().map(|s| s.psnr).collect();
    let mean = psnrs.iter().sum::<f64>() / 4.0;
    let std = (psnrs.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
    assert!((report.psnr_mean - mean).abs() < 1e-12);
    assert!((report.psnr_std - std).abs() < 1e-12);
    let single = evaluate_pairs(&pairs[..1], "x", SsimParams::default()).unwrap();
    assert_eq!((single.psnr_std, single.ssim_std), (0.0, 0.0));
    assert!(evaluate_pairs(&[], "x", SsimParams::default()).is_err());
}

#[test]
fn spectrum_profile_peaks_at_the_sinusoid() {
    let img = Image::from_fn(32, 8, |r, _| (2.0 * std::f64::consts::PI * 5.0 * r as f64 / 32.0).cos());
    let prof = spectrum_profile(&img, 0, 8).unwrap();
    assert_eq!(prof.len(), 32);
    let peak = (1..16).max_by(|&a, &b| prof[a].total_cmp(&prof[b])).unwrap();
    assert_eq!(peak, 5);
    let constant = spectrum_profile(&Image::filled(8, 4, 2.0), 1, 3).unwrap();
    assert!((constant[0] - 16f64.log10()).abs() < 1e-12);
    assert!(constant[1..].iter().all(|&v| v == -12.0));
    assert!(spectrum_profile(&img, 3, 3).is_err());
}
