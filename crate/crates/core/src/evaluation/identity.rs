use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::confusion::Sweep;
use crate::data::{oracle_identity_distance, unstack_images, Dataset, Image};
use crate::error::{Error, Result};

/// Identity preservation of one test identity across an age sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityPreservation {
    pub identity: String,
    /// Mean oracle distance between each input and its sweep outputs.
    pub output_distance: f64,
    /// Mean oracle distance between pairs of clean images of the identity;
    /// `None` with fewer than two images.
    pub baseline_distance: Option<f64>,
}

impl IdentityPreservation {
    /// `output_distance ≤ factor × baseline`.
    pub fn within(&self, factor: f64) -> bool {
        self.baseline_distance.is_some_and(|b| self.output_distance <= factor * b)
    }
}

/// Per-identity input-versus-output and clean same-identity distances.
/// `sweep` must have been generated from `test.images`.
pub fn identity_preservation(test: &Dataset, sweep: &Sweep) -> Result<Vec<IdentityPreservation>> {
    let inputs: Vec<Image> = (0..test.len()).map(|i| test.image(i)).collect::<Result<_>>()?;
    let outputs: Vec<Vec<Image>> = sweep.outputs.iter().map(unstack_images).collect::<Result<_>>()?;
    if outputs.iter().any(|o| o.len() != inputs.len()) {
        return Err(Error::Contract("sweep does not match the test set".into()));
    }
    let mut by_identity: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, id) in test.identities.iter().enumerate() {
        by_identity.entry(id).or_default().push(i);
    }
    let mut out = Vec::new();
    for id in test.identity_order() {
        let rows = &by_identity[id.as_str()];
        let mut sum = 0.0;
        let mut n = 0.0;
        for &i in rows {
            for batch in &outputs {
                sum += oracle_identity_distance(&inputs[i], &batch[i]);
                n += 1.0;
            }
        }
        let mut pairs = Vec::new();
        for (a, &i) in rows.iter().enumerate() {
            for &j in &rows[a + 1..] {
                pairs.push(oracle_identity_distance(&inputs[i], &inputs[j]));
            }
        }
        let baseline_distance = (!pairs.is_empty()).then(|| pairs.iter().sum::<f64>() / pairs.len() as f64);
        out.push(IdentityPreservation { identity: id, output_distance: sum / n, baseline_distance });
    }
    Ok(out)
}
