use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::age_embedding::TargetAge;
use crate::error::{Error, Result};

/// Draws `n` integer target ages uniformly from the inclusive `range`.
pub fn sample_target_ages<R: Rng + ?Sized>(
    n: usize,
    range: (i64, i64),
    num_classes: i64,
    rng: &mut R,
) -> Result<Vec<TargetAge>> {
    let (lo, hi) = range;
    if lo > hi {
        return Err(Error::Config(format!("empty target age range [{lo}, {hi}]")));
    }
    (0..n).map(|_| TargetAge::new(rng.random_range(lo..=hi) as f64, num_classes)).collect()
}

/// Dataset row indices grouped by age label.
#[derive(Debug, Clone)]
pub struct DatasetIndex {
    by_age: BTreeMap<i64, Vec<usize>>,
    len: usize,
}

impl DatasetIndex {
    pub fn new(ages: &[i64]) -> Self {
        let mut by_age: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for (i, &a) in ages.iter().enumerate() {
            by_age.entry(a).or_default().push(i);
        }
        Self { by_age, len: ages.len() }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn ages(&self) -> impl Iterator<Item = i64> + '_ {
        self.by_age.keys().copied()
    }

    /// Ages within `window` of `t`, or the nearest age(s) when none are.
    pub fn candidate_ages(&self, t: f64, window: i64) -> Vec<i64> {
        let within: Vec<i64> = self.ages().filter(|&a| (a as f64 - t).abs() <= window as f64).collect();
        if !within.is_empty() {
            return within;
        }
        let best = self.ages().map(|a| (a as f64 - t).abs()).fold(f64::INFINITY, f64::min);
        self.ages().filter(|&a| (a as f64 - t).abs() == best).collect()
    }

    fn pick<R: Rng + ?Sized>(&self, age: i64, rng: &mut R) -> usize {
        *self.by_age[&age].choose(rng).expect("indexed ages are non-empty")
    }
}

/// For each target, a row whose age lies within `window` years (uniform over
/// qualifying ages, then over rows of that age), falling back to the
/// nearest available age.
pub fn sample_real_for_discriminator<R: Rng + ?Sized>(
    index: &DatasetIndex,
    targets: &[TargetAge],
    window: i64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if index.is_empty() {
        return Err(Error::Validation("cannot sample discriminator reals from an empty dataset".into()));
    }
    Ok(targets
        .iter()
        .map(|t| {
            let ages = index.candidate_ages(t.value(), window);
            let age = *ages.choose(rng).expect("non-empty index has a nearest age");
            index.pick(age, rng)
        })
        .collect())
}

/// Plain variant: rows drawn uniformly from the whole dataset.
pub fn sample_real_uniform<R: Rng + ?Sized>(index: &DatasetIndex, n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if index.is_empty() {
        return Err(Error::Validation("cannot sample discriminator reals from an empty dataset".into()));
    }
    Ok((0..n).map(|_| rng.random_range(0..index.len())).collect())
}
