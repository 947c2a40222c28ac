use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tch::Tensor;

/// Seeded source of initial parameter values.
///
/// Values are drawn on the host so that a `(profile, seed)` pair always
/// yields the same network, independent of libtorch's global generator.
pub struct ParamInit {
    rng: ChaCha8Rng,
}

impl ParamInit {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// A child initializer, so that adding layers to one network never shifts
    /// the values drawn for another.
    pub fn fork(&mut self, stream: u64) -> Self {
        let mut rng = self.rng.clone();
        rng.set_stream(stream);
        Self { rng }
    }

    pub fn normal(&mut self, dims: &[i64], std: f64) -> Tensor {
        let n: i64 = dims.iter().product();
        let dist = Normal::new(0.0f32, std as f32).expect("finite std");
        let values: Vec<f32> = (0..n).map(|_| dist.sample(&mut self.rng)).collect();
        Tensor::from_slice(&values).reshape(dims)
    }
}
