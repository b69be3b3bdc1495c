//! Quantities of interest: the model interface and the built-in analytic models.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("batch {batch}: solver exited with status {status}: {stderr}")]
    NonZeroExit {
        batch: usize,
        status: String,
        stderr: String,
    },
    #[error("batch {batch}: solver did not finish within {seconds} s")]
    Timeout { batch: usize, seconds: f64 },
    #[error("batch {batch}: malformed response: {reason}")]
    MalformedResponse { batch: usize, reason: String },
    #[error("batch {batch}: expected {expected} response rows, got {got}")]
    RowCountMismatch {
        batch: usize,
        expected: usize,
        got: usize,
    },
    #[error("batch {batch}: {message}")]
    Io { batch: usize, message: String },
    #[error("unknown builtin model {0:?}")]
    UnknownBuiltin(String),
    #[error("sample {sample}: expected {expected} inputs, got {got}")]
    DimensionMismatch {
        sample: usize,
        expected: usize,
        got: usize,
    },
}

/// A contiguous, labeled range of outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputGroup {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

impl OutputGroup {
    pub fn range(&self) -> core::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// A vector-valued map from `N` named inputs to `P` named outputs.
pub trait Model {
    fn input_names(&self) -> &[String];

    fn output_names(&self) -> &[String];

    /// Spatial coordinate of each output, when meaningful.
    fn output_coordinates(&self) -> Option<&[f64]> {
        None
    }

    fn output_groups(&self) -> &[OutputGroup] {
        &[]
    }

    /// One row of `P` outputs per input row, in input order.
    fn evaluate_batch(&self, batch: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ModelError>;

    fn evaluate(&self, v: &[f64]) -> Result<Vec<f64>, ModelError> {
        let mut rows = self.evaluate_batch(&[v.to_vec()])?;
        Ok(rows.pop().unwrap_or_default())
    }
}

impl<M: Model + ?Sized> Model for &M {
    fn input_names(&self) -> &[String] {
        (**self).input_names()
    }
    fn output_names(&self) -> &[String] {
        (**self).output_names()
    }
    fn output_coordinates(&self) -> Option<&[f64]> {
        (**self).output_coordinates()
    }
    fn output_groups(&self) -> &[OutputGroup] {
        (**self).output_groups()
    }
    fn evaluate_batch(&self, batch: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ModelError> {
        (**self).evaluate_batch(batch)
    }
}

pub const BUILTIN_NAMES: [&str; 3] = ["ishigami", "beam_proxy", "quadratic_test"];

pub const ISHIGAMI_A: f64 = 7.0;
pub const ISHIGAMI_B: f64 = 0.1;

/// Minimum of the `quadratic_test` model on its unit box.
pub const QUADRATIC_CENTER: [f64; 2] = [0.3, 0.6];

/// Prior box of the beam proxy, `(name, lower, upper)`.
pub const BEAM_PROXY_INPUTS: [(&str, f64, f64); 2] =
    [("T_A", 1130.0, 1450.0), ("log_h_p", -5.0, 0.0)];
pub const BEAM_DISPLACEMENTS: usize = 9;
pub const BEAM_STRAINS: usize = 120;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Formula {
    Ishigami,
    BeamProxy,
    Quadratic,
}

/// One of the analytic models shipped with the toolkit.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltinModel {
    name: &'static str,
    formula: Formula,
    inputs: Vec<String>,
    outputs: Vec<String>,
    coordinates: Option<Vec<f64>>,
    groups: Vec<OutputGroup>,
    /// Suggested prior box per input.
    ranges: Vec<(f64, f64)>,
}

/// Looks up a builtin by name: `ishigami` (N=3, P=1), `beam_proxy` (N=2,
/// P=129) or `quadratic_test` (N=2, P=1).
pub fn builtin(name: &str) -> Result<BuiltinModel, ModelError> {
    let pi = core::f64::consts::PI;
    let model = match name {
        "ishigami" => BuiltinModel {
            name: "ishigami",
            formula: Formula::Ishigami,
            inputs: names(&["x1", "x2", "x3"]),
            outputs: names(&["f"]),
            coordinates: None,
            groups: Vec::new(),
            ranges: vec![(-pi, pi); 3],
        },
        "beam_proxy" => {
            let mut outputs: Vec<String> =
                (1..=BEAM_DISPLACEMENTS).map(|k| format!("u_{k}")).collect();
            outputs.extend((1..=BEAM_STRAINS).map(|j| format!("eps_{j}")));
            let mut coordinates: Vec<f64> =
                (0..BEAM_DISPLACEMENTS).map(beam::displacement_x).collect();
            coordinates.extend((0..BEAM_STRAINS).map(beam::strain_x));
            BuiltinModel {
                name: "beam_proxy",
                formula: Formula::BeamProxy,
                inputs: BEAM_PROXY_INPUTS.iter().map(|p| p.0.to_string()).collect(),
                outputs,
                coordinates: Some(coordinates),
                groups: vec![
                    OutputGroup {
                        name: "displacement".into(),
                        start: 0,
                        len: BEAM_DISPLACEMENTS,
                    },
                    OutputGroup {
                        name: "strain".into(),
                        start: BEAM_DISPLACEMENTS,
                        len: BEAM_STRAINS,
                    },
                ],
                ranges: BEAM_PROXY_INPUTS.iter().map(|p| (p.1, p.2)).collect(),
            }
        }
        "quadratic_test" => BuiltinModel {
            name: "quadratic_test",
            formula: Formula::Quadratic,
            inputs: names(&["x", "y"]),
            outputs: names(&["f"]),
            coordinates: None,
            groups: Vec::new(),
            ranges: vec![(0.0, 1.0); 2],
        },
        other => return Err(ModelError::UnknownBuiltin(other.into())),
    };
    Ok(model)
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl BuiltinModel {
    pub fn name(&self) -> &'static str {
        self.name
    }

    /// The model's natural input box, `(lower, upper)` per input.
    pub fn default_ranges(&self) -> &[(f64, f64)] {
        &self.ranges
    }

    fn eval_into(&self, v: &[f64], out: &mut Vec<f64>) {
        match self.formula {
            Formula::Ishigami => out.push(ishigami(v)),
            Formula::Quadratic => {
                let d0 = v[0] - QUADRATIC_CENTER[0];
                let d1 = v[1] - QUADRATIC_CENTER[1];
                out.push(d0 * d0 + d1 * d1);
            }
            Formula::BeamProxy => beam::evaluate(v[0], v[1], out),
        }
    }
}

impl Model for BuiltinModel {
    fn input_names(&self) -> &[String] {
        &self.inputs
    }

    fn output_names(&self) -> &[String] {
        &self.outputs
    }

    fn output_coordinates(&self) -> Option<&[f64]> {
        self.coordinates.as_deref()
    }

    fn output_groups(&self) -> &[OutputGroup] {
        &self.groups
    }

    fn evaluate_batch(&self, batch: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ModelError> {
        batch
            .iter()
            .enumerate()
            .map(|(sample, v)| {
                if v.len() != self.inputs.len() {
                    return Err(ModelError::DimensionMismatch {
                        sample,
                        expected: self.inputs.len(),
                        got: v.len(),
                    });
                }
                let mut out = Vec::with_capacity(self.outputs.len());
                self.eval_into(v, &mut out);
                Ok(out)
            })
            .collect()
    }
}

/// `sin v1 + a sin² v2 + b v3⁴ sin v1` with `a = 7`, `b = 0.1`.
pub fn ishigami(v: &[f64]) -> f64 {
    let s1 = Float::sin(v[0]);
    let s2 = Float::sin(v[1]);
    s1 + ISHIGAMI_A * s2 * s2 + ISHIGAMI_B * Float::powi(v[2], 4) * s1
}

/// Analytic stand-in for the part-scale solver.
///
/// Displacements `u_k = α_k + β_k s(T_A) + γ_k g(log h_p)` (mm) and strains
/// `ε_j = a_j + b_j s + c_j g + d_j s g`, with `s(T) = (T − 1130)/320` and
/// `g(x) = 1/(1 + exp(−4(x + 1)))`. The logistic `g` is flat below
/// `log h_p ≈ −2.5`, so the heat-loss parameter is only weakly identifiable
/// from data generated there.
pub mod beam {
    use super::*;

    /// Coordinate of displacement sensor `k` (0-based), mm.
    pub fn displacement_x(k: usize) -> f64 {
        0.5 + 3.5 * k as f64
    }

    /// Coordinate of strain location `j` (0-based): 120 points on [0.5, 60] mm.
    pub fn strain_x(j: usize) -> f64 {
        0.5 + j as f64 * 59.5 / (super::BEAM_STRAINS - 1) as f64
    }

    pub fn s(t: f64) -> f64 {
        (t - 1130.0) / 320.0
    }

    pub fn g(x: f64) -> f64 {
        1.0 / (1.0 + Float::exp(-4.0 * (x + 1.0)))
    }

    /// `(α_k, β_k, γ_k)` for displacement `k` (0-based).
    ///
    /// The temperature sensitivity decays along the sensors while the heat-loss
    /// sensitivity grows, so the two columns of the Jacobian are far from parallel.
    pub fn displacement_coefficients(k: usize) -> (f64, f64, f64) {
        let k = k as f64;
        let last = (super::BEAM_DISPLACEMENTS - 1) as f64;
        let alpha = 1.5 - 0.03 * k;
        let beta = 0.16 * Float::exp(-k / 2.5);
        let gamma = 0.12 * Float::exp(-(last - k) / 2.5);
        (alpha, beta, gamma)
    }

    /// `(a_j, b_j, c_j, d_j)` for strain location `j` (0-based).
    pub fn strain_coefficients(j: usize) -> (f64, f64, f64, f64) {
        let xi = strain_x(j) / 60.0;
        let pi = core::f64::consts::PI;
        let a = 2.0e-3 * (1.0 + 0.3 * Float::sin(pi * xi));
        let b = 0.8e-3 * (1.0 + 0.6 * xi);
        let c = 0.1e-3 * (1.0 + 0.5 * Float::cos(pi * xi));
        let d = 0.04e-3 * (1.0 - 0.5 * xi);
        (a, b, c, d)
    }

    /// Appends the 9 displacements followed by the 120 strains.
    pub fn evaluate(t: f64, log_hp: f64, out: &mut Vec<f64>) {
        let s = s(t);
        let g = g(log_hp);
        for k in 0..super::BEAM_DISPLACEMENTS {
            let (alpha, beta, gamma) = displacement_coefficients(k);
            out.push(alpha + beta * s + gamma * g);
        }
        for j in 0..super::BEAM_STRAINS {
            let (a, b, c, d) = strain_coefficients(j);
            out.push(a + b * s + c * g + d * s * g);
        }
    }
}
