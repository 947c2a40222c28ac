#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tch::{Kind, Tensor};

/// Largest relative error between autograd and central differences over
/// `probes` randomly chosen coordinates of `x`.
pub fn gradient_check(x: &Tensor, probes: usize, seed: u64, f: impl Fn(&Tensor) -> Tensor) -> f64 {
    assert_eq!(x.kind(), Kind::Double);
    let x = x.detach().set_requires_grad(true);
    let y = f(&x);
    let grad = Tensor::run_backward(&[y], &[&x], false, false).pop().unwrap();
    let flat_grad: Vec<f64> = Vec::try_from(grad.flatten(0, -1)).unwrap();
    let base: Vec<f64> = Vec::try_from(x.detach().flatten(0, -1)).unwrap();
    let shape = x.size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-6;
    let eval = |v: &[f64]| tch::no_grad(|| f(&Tensor::from_slice(v).reshape(shape.as_slice())).double_value(&[]));
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let i = rng.random_range(0..base.len());
        let mut plus = base.clone();
        plus[i] += h;
        let mut minus = base.clone();
        minus[i] -= h;
        let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
        let analytic = flat_grad[i];
        let scale = analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic - numeric).abs() / scale);
    }
    worst
}

pub fn randn(dims: &[i64], seed: u64) -> Tensor {
    tch::manual_seed(seed as i64);
    Tensor::randn(dims, (Kind::Double, tch::Device::Cpu))
}

pub fn values(t: &Tensor) -> Vec<f64> {
    Vec::try_from(t.to_kind(Kind::Double).flatten(0, -1)).unwrap()
}
