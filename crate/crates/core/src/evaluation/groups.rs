use serde::{Deserialize, Serialize};
use tch::Tensor;

use super::confusion::AgeReader;
use crate::age_embedding::TargetAge;
use crate::error::{Error, Result};
use crate::inference::{age_transform, EmbeddingMode};
use crate::networks::ModelBundle;

/// Half-open age range `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HalfOpenGroup {
    pub lo: i64,
    pub hi: i64,
}

impl HalfOpenGroup {
    pub const fn new(lo: i64, hi: i64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, age: i64) -> bool {
        self.lo <= age && age < self.hi
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.lo, self.hi)
    }
}

/// Decade groups covering the synthetic age span.
pub const SYNTHETIC_DECADES: [HalfOpenGroup; 5] = [
    HalfOpenGroup::new(20, 30),
    HalfOpenGroup::new(30, 40),
    HalfOpenGroup::new(40, 50),
    HalfOpenGroup::new(50, 60),
    HalfOpenGroup::new(60, 70),
];

/// Moves `real_age` by whole decades into `group`, keeping its last digit.
pub fn group_target_age(real_age: i64, group: HalfOpenGroup) -> Result<i64> {
    if real_age < 0 || group.lo < 0 || group.lo >= group.hi {
        return Err(Error::Validation(format!("invalid age {real_age} or group [{}, {})", group.lo, group.hi)));
    }
    let mut t = real_age;
    while t < group.lo {
        t += 10;
    }
    while t >= group.hi {
        t -= 10;
    }
    if group.contains(t) {
        Ok(t)
    } else {
        Err(Error::Validation(format!("age {real_age} cannot reach [{}, {}) in steps of 10", group.lo, group.hi)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAge {
    pub group: HalfOpenGroup,
    pub images: usize,
    pub mean_target: f64,
    /// Mean estimated age over readable outputs.
    pub mean_estimate: f64,
    pub unreadable: usize,
}

/// For each group, ages every image to its group target and averages the
/// estimated ages of the outputs.
pub fn mean_age_per_group(
    models: &ModelBundle,
    x: &Tensor,
    ages: &[i64],
    groups: &[HalfOpenGroup],
    reader: AgeReader,
) -> Result<Vec<GroupAge>> {
    if ages.is_empty() || ages.len() as i64 != x.size()[0] {
        return Err(Error::Validation(format!("{} ages for {:?} images", ages.len(), x.size())));
    }
    let k = models.profile.num_classes;
    let mut out = Vec::with_capacity(groups.len());
    for &g in groups {
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for (i, &a) in ages.iter().enumerate() {
            if let Ok(t) = group_target_age(a, g) {
                rows.push(i as i64);
                targets.push(TargetAge::new(t as f64, k)?);
            }
        }
        if rows.is_empty() {
            return Err(Error::Validation(format!("no image can be targeted into group {}", g.label())));
        }
        let subset = x.index_select(0, &Tensor::from_slice(&rows));
        let generated = age_transform(models, &subset, &targets, EmbeddingMode::trained(models))?;
        let est = reader.read(models, &generated)?;
        let readable: Vec<f64> = est.iter().flatten().copied().collect();
        let mean_estimate =
            if readable.is_empty() { f64::NAN } else { readable.iter().sum::<f64>() / readable.len() as f64 };
        out.push(GroupAge {
            group: g,
            images: rows.len(),
            mean_target: targets.iter().map(|t| t.value()).sum::<f64>() / targets.len() as f64,
            mean_estimate,
            unreadable: est.len() - readable.len(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_cases() {
        assert_eq!(group_target_age(23, HalfOpenGroup::new(30, 40)).unwrap(), 33);
        assert_eq!(group_target_age(35, HalfOpenGroup::new(30, 40)).unwrap(), 35);
        assert_eq!(group_target_age(51, HalfOpenGroup::new(10, 30)).unwrap(), 21);
        assert!(group_target_age(37, HalfOpenGroup::new(30, 35)).is_err());
    }
}
