use std::collections::BTreeMap;

use tch::Tensor;

use crate::error::{Error, Result};

/// Adam with bias correction over a fixed, named parameter list.
#[derive(Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    params: Vec<(String, Tensor)>,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    steps: i64,
}

impl Adam {
    pub fn new(params: Vec<(String, Tensor)>, lr: f64, beta1: f64, beta2: f64) -> Self {
        let zeros = |p: &[(String, Tensor)]| p.iter().map(|(_, t)| t.zeros_like().detach()).collect::<Vec<_>>();
        Self { lr, beta1, beta2, eps: 1e-8, m: zeros(&params), v: zeros(&params), params, steps: 0 }
    }

    pub fn steps(&self) -> i64 {
        self.steps
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in &mut self.params {
            p.zero_grad();
        }
    }

    /// One update from the accumulated gradients. Parameters without a
    /// gradient are left alone.
    pub fn step(&mut self) {
        self.steps += 1;
        let c1 = 1.0 - self.beta1.powi(self.steps as i32);
        let c2 = 1.0 - self.beta2.powi(self.steps as i32);
        tch::no_grad(|| {
            for (i, (_, p)) in self.params.iter_mut().enumerate() {
                let g = p.grad();
                if !g.defined() {
                    continue;
                }
                self.m[i] = &self.m[i] * self.beta1 + &g * (1.0 - self.beta1);
                self.v[i] = &self.v[i] * self.beta2 + g.square() * (1.0 - self.beta2);
                let update = (&self.m[i] / c1) / ((&self.v[i] / c2).sqrt() + self.eps) * self.lr;
                *p -= update;
            }
        });
    }

    /// Moments and step count, keyed under `prefix`.
    pub fn state(&self, prefix: &str) -> BTreeMap<String, Tensor> {
        let mut out = BTreeMap::new();
        out.insert(format!("{prefix}/steps"), Tensor::from_slice(&[self.steps]));
        for (i, (name, _)) in self.params.iter().enumerate() {
            out.insert(format!("{prefix}/m/{name}"), self.m[i].copy());
            out.insert(format!("{prefix}/v/{name}"), self.v[i].copy());
        }
        out
    }

    pub fn load_state(&mut self, prefix: &str, state: &BTreeMap<String, Tensor>) -> Result<()> {
        let get = |key: String| {
            state.get(&key).ok_or_else(|| Error::Validation(format!("optimizer state is missing '{key}'")))
        };
        self.steps = get(format!("{prefix}/steps"))?.int64_value(&[0]);
        for (i, (name, p)) in self.params.iter().enumerate() {
            let m = get(format!("{prefix}/m/{name}"))?;
            let v = get(format!("{prefix}/v/{name}"))?;
            if m.size() != p.size() || v.size() != p.size() {
                return Err(Error::Validation(format!("optimizer state for '{name}' has the wrong shape")));
            }
            self.m[i] = m.to_kind(p.kind()).copy();
            self.v[i] = v.to_kind(p.kind()).copy();
        }
        Ok(())
    }
}
