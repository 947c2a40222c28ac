use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resage::age_embedding::TargetAge;
use resage::evaluation::*;
use resage::inference::{age_transform, EmbeddingMode};
use resage::networks::{ModelBundle, SizeProfile};
use tch::{Device, Kind, Tensor};

/// Square root of a matrix with positive real spectrum (not necessarily
/// symmetric) by the Denman–Beavers iteration.
fn denman_beavers_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = DMatrix::identity(n, n);
    for _ in 0..100 {
        let yi = y.clone().try_inverse().unwrap();
        let zi = z.clone().try_inverse().unwrap();
        let y_next = (&y + zi) * 0.5;
        let z_next = (&z + yi) * 0.5;
        let done = (&y_next - &y).amax() < 1e-15 * y.amax().max(1.0);
        y = y_next;
        z = z_next;
        if done {
            break;
        }
    }
    y
}

fn reference_fid(a: &GaussianStats, b: &GaussianStats) -> f64 {
    let diff = &a.mean - &b.mean;
    let cross = denman_beavers_sqrt(&(&a.cov * &b.cov));
    diff.dot(&diff) + a.cov.trace() + b.cov.trace() - 2.0 * cross.trace()
}

fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &m * m.transpose() + DMatrix::identity(d, d) * 0.1
}

fn random_stats(d: usize, rng: &mut ChaCha8Rng) -> GaussianStats {
    let mean = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
    GaussianStats::new(mean, random_spd(d, rng)).unwrap()
}

fn gaussian_1d(mu: f64, var: f64) -> GaussianStats {
    GaussianStats::new(DVector::from_element(1, mu), DMatrix::from_element(1, 1, var)).unwrap()
}

#[test]
fn fid_of_identical_stats_is_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for d in [1, 3, 16] {
        let s = random_stats(d, &mut rng);
        assert!(fid(&s, &s).unwrap().abs() < 1e-6);
    }
}

#[test]
fn fid_one_dimensional_closed_form() {
    assert!((fid(&gaussian_1d(0.0, 1.0), &gaussian_1d(1.0, 1.0)).unwrap() - 1.0).abs() < 1e-6);
    // (μa − μb)² + (σa − σb)²
    let got = fid(&gaussian_1d(2.0, 4.0), &gaussian_1d(-1.0, 9.0)).unwrap();
    assert!((got - (9.0 + 1.0)).abs() < 1e-9);
}

#[test]
fn fid_matches_denman_beavers_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for d in [2, 4, 8] {
        let (a, b) = (random_stats(d, &mut rng), random_stats(d, &mut rng));
        let (got, expected) = (fid(&a, &b).unwrap(), reference_fid(&a, &b));
        assert!((got - expected).abs() <= 1e-8 * expected.abs().max(1.0), "{got} vs {expected}");
        assert!((fid(&b, &a).unwrap() - got).abs() <= 1e-8 * got.max(1.0));
    }
}

#[test]
fn symmetric_sqrt_squares_back() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random_spd(5, &mut rng);
    let r = symmetric_sqrt(&a);
    assert!((&r * &r - &a).amax() < 1e-10);
}

#[test]
fn stats_reject_bad_covariances() {
    let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
    assert!(GaussianStats::new(DVector::zeros(2), asym).is_err());
    let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    assert!(GaussianStats::new(DVector::zeros(2), indefinite).is_err());
    assert!(feature_stats(&[vec![1.0, 2.0]]).is_err());
    assert!(feature_stats(&[vec![1.0], vec![1.0, 2.0]]).is_err());
}

#[test]
fn feature_stats_are_unbiased() {
    let s = feature_stats(&[vec![1.0, 0.0], vec![3.0, 0.0], vec![5.0, 3.0]]).unwrap();
    assert!((s.mean[0] - 3.0).abs() < 1e-12 && (s.mean[1] - 1.0).abs() < 1e-12);
    // var of (1, 3, 5) with n − 1 is 4; cov with (0, 0, 3) is 3.
    assert!((s.cov[(0, 0)] - 4.0).abs() < 1e-12);
    assert!((s.cov[(0, 1)] - 3.0).abs() < 1e-12);
    assert!((s.cov[(1, 1)] - 3.0).abs() < 1e-12);
}

#[test]
fn fid_of_a_set_against_itself_through_features() {
    let models = ModelBundle::new(SizeProfile::desk(), 2, true).unwrap();
    tch::manual_seed(4);
    let x = Tensor::rand([12, 3, 64, 64], (Kind::Float, Device::Cpu)) * 2.0 - 1.0;
    let s = image_stats(&x, &EncoderFeatures(&models)).unwrap();
    assert!(fid(&s, &s).unwrap() < 1e-6);
}

#[test]
fn confusion_worked_example() {
    let grid = AgeGrid::new(20, 40, 10).unwrap();
    let est = vec![vec![Some(20.0), Some(26.0)], vec![Some(30.0), None], vec![Some(44.0), Some(38.0)]];
    let m = ConfusionMatrix::from_estimates(ConfusionMode::Interpolated, AgeReader::Oracle, grid, &est).unwrap();
    assert_eq!(m.counts, vec![vec![1, 1, 0], vec![0, 1, 0], vec![0, 0, 2]]);
    assert_eq!(m.unreadable, vec![0, 1, 0]);
    assert_eq!(m.abs_errors, vec![3.0, 0.0, 3.0]);
    // (0 + 6 + 0 + 20 + 4 + 2) / 6
    assert!((m.mean_abs_error() - 32.0 / 6.0).abs() < 1e-12);
    assert!(ConfusionMatrix::from_estimates(ConfusionMode::Interpolated, AgeReader::Oracle, grid, &est[..2]).is_err());
}

#[test]
fn sweeps_refuse_untrained_models() {
    let models = ModelBundle::new(SizeProfile::desk(), 0, true).unwrap();
    let x = Tensor::zeros([2, 3, 64, 64], (Kind::Float, Device::Cpu));
    let r = generate_sweep(&models, &x, AgeGrid::sweep_default(), ConfusionMode::SelfEstimated, &[]);
    assert!(matches!(r, Err(resage::Error::Validation(_))));
}

#[test]
fn sweep_frames_match_single_transforms() {
    let mut models = ModelBundle::new(SizeProfile::desk(), 5, true).unwrap();
    models.step = 1;
    tch::manual_seed(6);
    let x = Tensor::rand([3, 3, 64, 64], (Kind::Float, Device::Cpu)) * 2.0 - 1.0;
    let grid = AgeGrid::new(30, 38, 4).unwrap();
    let sweep = generate_sweep(&models, &x, grid, ConfusionMode::SelfEstimated, &[]).unwrap();
    assert_eq!(sweep.outputs.len(), 3);
    for (frame, t) in sweep.outputs.iter().zip(grid.ages()) {
        let targets = vec![TargetAge::new(t as f64, 100).unwrap(); 3];
        let again = age_transform(&models, &x, &targets, EmbeddingMode::trained(&models)).unwrap();
        assert!(frame.equal(&again));
    }
}

#[test]
fn interpolation_endpoints_are_the_two_generations() {
    let models = ModelBundle::new(SizeProfile::desk(), 7, true).unwrap();
    tch::manual_seed(8);
    let a = Tensor::rand([1, 3, 64, 64], (Kind::Float, Device::Cpu)) * 2.0 - 1.0;
    let b = Tensor::rand([1, 3, 64, 64], (Kind::Float, Device::Cpu)) * 2.0 - 1.0;
    let t = TargetAge::new(40.0, 100).unwrap();
    let frames = identity_interpolation(&models, &a, &b, t, 5).unwrap();
    assert_eq!(frames.size(), vec![5, 3, 64, 64]);
    let mode = EmbeddingMode::trained(&models);
    let ga = age_transform(&models, &a, &[t], mode).unwrap();
    let gb = age_transform(&models, &b, &[t], mode).unwrap();
    assert!((frames.get(0) - ga.get(0)).abs().max().double_value(&[]) < 1e-6);
    assert!((frames.get(4) - gb.get(0)).abs().max().double_value(&[]) < 1e-6);
    assert!(identity_interpolation(&models, &a, &b, t, 1).is_err());
}

#[test]
fn group_targets() {
    let g = HalfOpenGroup::new(30, 40);
    assert_eq!(group_target_age(23, g).unwrap(), 33);
    assert_eq!(group_target_age(35, g).unwrap(), 35);
    assert_eq!(group_target_age(51, g).unwrap(), 31);
    assert_eq!(SYNTHETIC_DECADES.len(), 5);
}

proptest! {
    #[test]
    fn feature_stats_ignore_sample_order(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut feats: Vec<Vec<f64>> = (0..8).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let a = feature_stats(&feats).unwrap();
        feats.reverse();
        feats.swap(1, 5);
        let b = feature_stats(&feats).unwrap();
        prop_assert!((&a.mean - &b.mean).amax() < 1e-12);
        prop_assert!((&a.cov - &b.cov).amax() < 1e-12);
    }

    #[test]
    fn fid_is_symmetric_and_nonnegative(seed in 0u64..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (random_stats(3, &mut rng), random_stats(3, &mut rng));
        let (ab, ba) = (fid(&a, &b).unwrap(), fid(&b, &a).unwrap());
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-8 * ab.max(1.0));
    }
}
