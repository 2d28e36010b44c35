use octalias_core::dsp;
use octalias_core::recon::{make_downsample_plan, reconstruct_aline_undersampled, reinterpolate, PrepMethod};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: usize = 1280;

fn zero_mean_fringe(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x: Vec<f64> = (0..N).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mean = x.iter().sum::<f64>() / N as f64;
    x.iter_mut().for_each(|v| *v -= mean);
    x
}

#[test]
fn zero_interpolation_replicates_the_spectrum() {
    let plan = make_downsample_plan(N, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let x = zero_mean_fringe(&mut rng);
        let full = dsp::dft_real(&x).unwrap();
        let expanded = reinterpolate(&plan.decimate(&x).unwrap(), &plan, PrepMethod::ZeroInterp).unwrap();
        let z = dsp::dft_real(&expanded).unwrap();
        for k in 0..N {
            let want = 0.5 * (full[k] + full[(k + N / 2) % N]);
            assert!((z[k] - want).norm() < 1e-9, "bin {k}");
        }
        // The reconstruction removes the mean, which only touches bin 0.
        let rec = reconstruct_aline_undersampled(&x, &plan, PrepMethod::ZeroInterp).unwrap();
        assert_eq!(rec.len(), N / 2);
        assert!(rec[0].norm() < 1e-9);
        for k in 1..N / 2 {
            assert!((rec[k] - z[k]).norm() < 1e-9, "bin {k}");
        }
    }
}

#[test]
fn deep_reflectors_fold_to_the_mirror_bin() {
    let plan = make_downsample_plan(N, 2).unwrap();
    for cycles in [321usize, 400, 500, 639] {
        let x: Vec<f64> = (0..N)
            .map(|n| (2.0 * std::f64::consts::PI * (cycles * n % N) as f64 / N as f64 + 0.3).cos())
            .collect();
        let rec = reconstruct_aline_undersampled(&x, &plan, PrepMethod::ZeroInterp).unwrap();
        let mags: Vec<f64> = rec.iter().map(|z| z.norm()).collect();
        let peak = (0..=N / 4).max_by(|&a, &b| mags[a].total_cmp(&mags[b])).unwrap();
        assert_eq!(peak, N / 2 - cycles);
        assert!((mags[N / 2 - cycles] - mags[cycles]).abs() < 1e-9);
    }
}

#[test]
fn three_fold_plan_keeps_427_samples() {
    let plan = make_downsample_plan(N, 3).unwrap();
    assert_eq!(plan.kept_len(), 427);
    assert_eq!(plan.kept_indices, (0..N).step_by(3).collect::<Vec<_>>());
    assert_eq!(*plan.kept_indices.last().unwrap(), 1278);
}

#[test]
fn unsupported_factors_are_rejected() {
    assert!(make_downsample_plan(N, 1).is_err());
    assert!(make_downsample_plan(N, 4).is_err());
}

#[test]
fn interpolators_pass_through_kept_samples() {
    let plan = make_downsample_plan(N, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = zero_mean_fringe(&mut rng);
    let kept = plan.decimate(&x).unwrap();
    for method in [PrepMethod::Nearest, PrepMethod::Linear, PrepMethod::Cubic, PrepMethod::ZeroInterp] {
        let out = reinterpolate(&kept, &plan, method).unwrap();
        for (&i, &v) in plan.kept_indices.iter().zip(&kept) {
            assert!((out[i] - v).abs() < 1e-12, "{method} at {i}");
        }
    }
    let padded = reinterpolate(&kept, &plan, PrepMethod::ZeroPad).unwrap();
    assert_eq!(&padded[..427], &kept[..]);
    assert!(padded[427..].iter().all(|&v| v == 0.0));
}
