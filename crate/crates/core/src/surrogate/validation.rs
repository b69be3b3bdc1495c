//! Relative pointwise (max) and root-mean-square errors against reference runs.

use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::{Surrogate, SurrogateError};
use crate::models::Model;

/// Samples whose reference magnitude is below this fraction of the output's
/// largest reference magnitude are excluded from the relative errors.
pub const ZERO_REFERENCE_FRACTION: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSample {
    pub output: usize,
    pub sample: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationErrors {
    /// Max relative error per output.
    pub e_ppe: Vec<f64>,
    /// Root mean squared relative error per output.
    pub e_mse: Vec<f64>,
    pub samples: usize,
    pub skipped: Vec<SkippedSample>,
}

impl ValidationErrors {
    pub fn max_e_ppe(&self) -> f64 {
        self.e_ppe.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_e_mse(&self) -> f64 {
        self.e_mse.iter().copied().fold(0.0, f64::max)
    }
}

/// Evaluates `model` at `samples` and compares against the surrogate.
pub fn validation_errors(
    surrogate: &Surrogate,
    model: &dyn Model,
    samples: &[Vec<f64>],
) -> Result<ValidationErrors, SurrogateError> {
    let reference = model.evaluate_batch(samples)?;
    validation_errors_from_values(surrogate, samples, &reference)
}

/// `reference[s][p]` is the model output `p` at `samples[s]`.
pub fn validation_errors_from_values(
    surrogate: &Surrogate,
    samples: &[Vec<f64>],
    reference: &[Vec<f64>],
) -> Result<ValidationErrors, SurrogateError> {
    if samples.is_empty() {
        return Err(SurrogateError::NoSamples);
    }
    if reference.len() != samples.len() {
        return Err(SurrogateError::ValueCountMismatch {
            expected: samples.len(),
            got: reference.len(),
        });
    }
    let p = surrogate.outputs();
    if let Some(bad) = reference.iter().find(|r| r.len() != p) {
        return Err(SurrogateError::ValueCountMismatch {
            expected: p,
            got: bad.len(),
        });
    }
    let predicted = samples
        .iter()
        .map(|v| surrogate.evaluate(v))
        .collect::<Result<Vec<_>, _>>()?;

    let mut e_ppe = Vec::with_capacity(p);
    let mut e_mse = Vec::with_capacity(p);
    let mut skipped = Vec::new();
    for k in 0..p {
        let scale = reference.iter().fold(0.0f64, |m, r| m.max(r[k].abs()));
        let floor = ZERO_REFERENCE_FRACTION * scale;
        let mut max_rel = 0.0f64;
        let mut sum_sq = 0.0;
        let mut used = 0usize;
        for (s, (r, y)) in reference.iter().zip(&predicted).enumerate() {
            if r[k].abs() <= floor {
                skipped.push(SkippedSample { output: k, sample: s });
                continue;
            }
            let rel = (r[k] - y[k]).abs() / r[k].abs();
            max_rel = max_rel.max(rel);
            sum_sq += rel * rel;
            used += 1;
        }
        if used == 0 {
            return Err(SurrogateError::AllReferencesZero {
                output: surrogate.output_names()[k].clone(),
            });
        }
        e_ppe.push(max_rel);
        e_mse.push(Float::sqrt(sum_sq / used as f64));
    }
    Ok(ValidationErrors {
        e_ppe,
        e_mse,
        samples: samples.len(),
        skipped,
    })
}
