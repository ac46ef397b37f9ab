//! Mixup augmentation: convex combinations of input pairs and their label
//! vectors.

use crate::error::{Error, Result};

pub const DEFAULT_MIXUP_ALPHA: f64 = 0.4;

#[derive(Debug, Clone)]
pub struct MixupPair<'a> {
    pub lambda: f64,
    pub inputs: (&'a [f64], &'a [f64]),
    pub targets: (&'a [f64], &'a [f64]),
}

/// Mix inputs and targets with the pair's lambda.
pub fn mixup(pair: &MixupPair<'_>) -> Result<(Vec<f64>, Vec<f64>)> {
    let l = pair.lambda;
    if !(0.0..=1.0).contains(&l) {
        return Err(Error::Validation(format!("mixup lambda {l} outside [0, 1]")));
    }
    if pair.inputs.0.len() != pair.inputs.1.len() || pair.targets.0.len() != pair.targets.1.len() {
        return Err(Error::Shape("mixup pair shapes differ".into()));
    }
    let mixed_x = pair
        .inputs
        .0
        .iter()
        .zip(pair.inputs.1)
        .map(|(&a, &b)| l * a + (1.0 - l) * b)
        .collect();
    let mixed_y = pair
        .targets
        .0
        .iter()
        .zip(pair.targets.1)
        .map(|(&a, &b)| l * a + (1.0 - l) * b)
        .collect();
    Ok((mixed_x, mixed_y))
}
