mod common;

use common::{gradient_check, randn, values};
use proptest::prelude::*;
use resage::age_embedding::AgeDistribution;
use resage::losses::*;
use tch::{Kind, Tensor};

fn dist(rows: &[&[f64]]) -> AgeDistribution {
    let k = rows[0].len() as i64;
    let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    AgeDistribution::new(Tensor::from_slice(&flat).reshape([rows.len() as i64, k])).unwrap()
}

/// Plain-arithmetic mean-variance loss for one distribution.
fn reference_mv(p: &[f64], y: f64, w: &LossWeights) -> f64 {
    let lo = y.floor() as usize;
    let f = y - y.floor();
    let mut ce = -(1.0 - f) * p[lo].ln();
    if f > 0.0 {
        ce -= f * p[lo + 1].ln();
    }
    let m: f64 = p.iter().enumerate().map(|(j, q)| j as f64 * q).sum();
    let v: f64 = p.iter().enumerate().map(|(j, q)| (j as f64 - m).powi(2) * q).sum();
    ce + w.lambda_mv1 / 2.0 * (m - y).powi(2) + w.lambda_mv2 * v
}

#[test]
fn mean_variance_worked_example() {
    let w = LossWeights::default();
    let loss = mean_variance_loss(&dist(&[&[0.2, 0.5, 0.3]]), &[1.0], &w).unwrap();
    assert!((loss.softmax.double_value(&[]) - 0.5f64.ln().abs()).abs() < 1e-6);
    assert!((loss.mean.double_value(&[]) - 0.005).abs() < 1e-9);
    assert!((loss.variance.double_value(&[]) - 0.49).abs() < 1e-9);
    assert!((loss.total.double_value(&[]) - 0.695847).abs() < 1e-6);
}

#[test]
fn mean_variance_zero_weights_is_cross_entropy() {
    let loss = mean_variance_loss(&dist(&[&[0.2, 0.5, 0.3]]), &[2.0], &LossWeights::zero()).unwrap();
    assert!((loss.total.double_value(&[]) + 0.3f64.ln()).abs() < 1e-12);
}

#[test]
fn mean_variance_of_one_hot_at_label_is_zero() {
    let loss = mean_variance_loss(&dist(&[&[0.0, 0.0, 1.0, 0.0]]), &[2.0], &LossWeights::default()).unwrap();
    assert_eq!(loss.total.double_value(&[]), 0.0);
}

#[test]
fn mean_variance_rejects_bad_batches() {
    let w = LossWeights::default();
    let p = dist(&[&[0.5, 0.5]]);
    assert!(mean_variance_loss(&p, &[], &w).is_err());
    assert!(mean_variance_loss(&p, &[0.0, 1.0], &w).is_err());
    assert!(mean_variance_loss(&p, &[1.5], &w).is_err());
}

#[test]
fn logits_and_probability_forms_agree() {
    let logits = randn(&[5, 12], 1);
    let targets = [0.0, 3.5, 7.0, 11.0, 5.25];
    let w = LossWeights::default();
    let a = mean_variance_loss_from_logits(&logits, &targets, &w).unwrap();
    let b = mean_variance_loss(&AgeDistribution::from_logits(&logits), &targets, &w).unwrap();
    assert!((a.total.double_value(&[]) - b.total.double_value(&[])).abs() < 1e-12);
    let p = values(&logits.softmax(-1, Kind::Double));
    let expected: f64 =
        targets.iter().enumerate().map(|(i, &y)| reference_mv(&p[i * 12..(i + 1) * 12], y, &w)).sum::<f64>() / 5.0;
    assert!((a.total.double_value(&[]) - expected).abs() < 1e-12);
}

#[test]
fn mean_variance_gradient_matches_finite_differences() {
    let w = LossWeights::default();
    let targets = [4.0, 0.0, 8.5, 2.25];
    let err = gradient_check(&randn(&[4, 10], 2), 40, 3, |x| {
        mean_variance_loss_from_logits(x, &targets, &w).unwrap().total
    });
    assert!(err <= 1e-4, "relative error {err}");
}

#[test]
fn l1_gradient_matches_finite_differences() {
    let target = randn(&[2, 3, 4, 4], 4);
    // Offsets bounded away from zero keep every probe off the kink.
    let offset = (randn(&[2, 3, 4, 4], 5).sign() * (randn(&[2, 3, 4, 4], 6).abs() + 0.1)).detach();
    let x = &target + &offset;
    let err = gradient_check(&x, 30, 7, |x| identity_l1_loss(&target, x).unwrap());
    assert!(err <= 1e-4, "relative error {err}");
}

#[test]
fn hinge_gradients_match_finite_differences() {
    // Logits at ±(0.5 + |z|) around ±1 stay away from the hinge kinks.
    let away = |seed| {
        let z = randn(&[2, 1, 7, 7], seed);
        let m = z.abs() * 0.3 + 0.05;
        (z.sign() * m + 1.0).detach()
    };
    let real = away(8);
    let fake = -away(9);
    let err = gradient_check(&real, 25, 10, |r| hinge_d_loss(r, &fake));
    assert!(err <= 1e-4, "relative error {err}");
    let err = gradient_check(&fake, 25, 11, |f| hinge_d_loss(&real, f));
    assert!(err <= 1e-4, "relative error {err}");
    let err = gradient_check(&fake, 20, 12, hinge_g_loss);
    assert!(err <= 1e-4, "relative error {err}");
}

#[test]
fn hinge_worked_examples() {
    let real = Tensor::from_slice(&[2.0, 0.5]);
    let fake = Tensor::from_slice(&[-2.0, 0.0]);
    // real: max(0,−1)=0, max(0,0.5)=0.5 → 0.25; fake: 0 and 1 → 0.5.
    assert!((hinge_d_loss(&real, &fake).double_value(&[]) - 0.75).abs() < 1e-12);
    assert!((hinge_g_loss(&fake).double_value(&[]) - 1.0).abs() < 1e-12);
    let perfect = hinge_d_loss(&Tensor::from_slice(&[1.0, 3.0]), &Tensor::from_slice(&[-1.0, -5.0]));
    assert_eq!(perfect.double_value(&[]), 0.0);
}

#[test]
fn l1_worked_example_and_shape_check() {
    let a = Tensor::from_slice(&[0.0, 1.0, -1.0, 0.5]).reshape([1, 1, 2, 2]);
    let b = Tensor::from_slice(&[0.5, 1.0, 1.0, 0.0]).reshape([1, 1, 2, 2]);
    assert!((identity_l1_loss(&a, &b).unwrap().double_value(&[]) - 0.75).abs() < 1e-12);
    assert!(identity_l1_loss(&a, &b.reshape([1, 4, 1, 1])).is_err());
}

#[test]
fn weighted_totals() {
    let w = LossWeights::default();
    assert!((weighted_fake_age(2.0, 3.0, &w) - (0.4 * 2.0 + 3.0)).abs() < 1e-12);
    let report = LossReport::new()
        .with(LossTerm::RealAge, 1.0)
        .with(LossTerm::FakeAgeEncoding, 2.0)
        .with(LossTerm::FakeAgeImage, 3.0)
        .with(LossTerm::IdentityL1, 0.2)
        .with(LossTerm::AdvG, -0.5);
    let total = total_generator_loss(&report, &w).unwrap();
    assert!((total - (0.05 * (1.0 + 3.8) + 0.2 - 0.5)).abs() < 1e-12);
    assert!(total_generator_loss(&LossReport::new(), &w).is_err());
    let zero = total_generator_loss(&report, &LossWeights::zero()).unwrap();
    assert_eq!(zero, 0.0);
}

#[test]
fn report_round_trips_through_json() {
    let report = LossReport::new().with(LossTerm::TotalG, 1.5).with(LossTerm::AdvD, 0.25);
    let json = serde_json::to_string(&report).unwrap();
    let back: LossReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report);
    assert!(report.is_finite());
    assert!(!report.clone().with(LossTerm::AdvG, f64::NAN).is_finite());
}

proptest! {
    #[test]
    fn mean_variance_matches_reference(
        raw in proptest::collection::vec(0.01f64..1.0, 6),
        y in 0.0f64..5.0,
    ) {
        let s: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|v| v / s).collect();
        let w = LossWeights::default();
        let got = mean_variance_loss(&dist(&[&p]), &[y], &w).unwrap().total.double_value(&[]);
        prop_assert!((got - reference_mv(&p, y, &w)).abs() < 1e-9);
        prop_assert!(got >= 0.0);
    }

    #[test]
    fn hinge_d_is_nonnegative(real in proptest::collection::vec(-5.0f64..5.0, 1..10), fake in proptest::collection::vec(-5.0f64..5.0, 1..10)) {
        let v = hinge_d_loss(&Tensor::from_slice(&real), &Tensor::from_slice(&fake)).double_value(&[]);
        let expected = real.iter().map(|r| (1.0 - r).max(0.0)).sum::<f64>() / real.len() as f64
            + fake.iter().map(|f| (1.0 + f).max(0.0)).sum::<f64>() / fake.len() as f64;
        prop_assert!((v - expected).abs() < 1e-12);
    }
}
