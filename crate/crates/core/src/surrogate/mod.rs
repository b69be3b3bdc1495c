//! Sparse-grid surrogates built with the combination technique.
//!
//! A [`SparseGrid`] is the union of the tensor grids whose combination
//! coefficient is nonzero. A [`Surrogate`] pairs it with the model outputs at
//! every global point; evaluation at `v` is
//! `Σ_{c_i ≠ 0} c_i · U_i(v)`, computed once as a vector of cardinal weights
//! over the global points so that all `P` outputs share the work.

mod grid;
mod lagrange;
mod space;
mod validation;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

pub use grid::{SparseGrid, TensorComponent, TensorGrid};
pub use lagrange::BarycentricNodes;
pub use space::{Distribution, Parameter, ParameterSpace};
pub use validation::{validation_errors, validation_errors_from_values, ValidationErrors};

use crate::knots::KnotError;
use crate::models::ModelError;
use crate::multi_index::{MultiIndex, MultiIndexError, MultiIndexSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SurrogateError {
    #[error("parameter space has no dimensions")]
    EmptySpace,
    #[error("duplicate parameter name {0:?}")]
    DuplicateName(String),
    #[error("parameter {dim}: {source}")]
    InvalidParameter { dim: usize, source: KnotError },
    #[error(transparent)]
    Knot(#[from] KnotError),
    #[error(transparent)]
    IndexSet(#[from] MultiIndexError),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("expected {expected} values, got {got}")]
    ValueCountMismatch { expected: usize, got: usize },
    #[error("output {output:?} has non-finite value {value} at grid point {point} {coordinates:?}")]
    NonFiniteValue {
        output: String,
        point: usize,
        coordinates: Vec<f64>,
        value: f64,
    },
    #[error("grid points {a} and {b} coincide within tolerance")]
    NearDuplicatePoints { a: usize, b: usize },
    #[error("stored grid point {point} does not match the regenerated grid")]
    PointMismatch { point: usize },
    #[error("output names must be unique; {0:?} repeats")]
    DuplicateOutput(String),
    #[error("no output named {0:?}")]
    UnknownOutput(String),
    #[error("every reference value of output {output:?} is zero; relative errors are undefined")]
    AllReferencesZero { output: String },
    #[error("validation needs at least one sample")]
    NoSamples,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A sparse grid with `P` outputs stored at each of its `M` global points.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    grid: SparseGrid,
    output_names: Vec<String>,
    /// `values[p][m]`, P × M.
    values: Vec<Vec<f64>>,
}

impl Surrogate {
    /// `values` is P × M, one row per output.
    pub fn new(
        grid: SparseGrid,
        output_names: Vec<String>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self, SurrogateError> {
        if values.len() != output_names.len() {
            return Err(SurrogateError::ValueCountMismatch {
                expected: output_names.len(),
                got: values.len(),
            });
        }
        for (k, name) in output_names.iter().enumerate() {
            if output_names[..k].contains(name) {
                return Err(SurrogateError::DuplicateOutput(name.clone()));
            }
        }
        for (row, name) in values.iter().zip(&output_names) {
            if row.len() != grid.len() {
                return Err(SurrogateError::ValueCountMismatch {
                    expected: grid.len(),
                    got: row.len(),
                });
            }
            if let Some(point) = row.iter().position(|x| !x.is_finite()) {
                return Err(SurrogateError::NonFiniteValue {
                    output: name.clone(),
                    point,
                    coordinates: grid.points()[point].clone(),
                    value: row[point],
                });
            }
        }
        Ok(Self {
            grid,
            output_names,
            values,
        })
    }

    /// Builds from model output rows, one row of `P` values per grid point (M × P).
    pub fn from_point_rows(
        grid: SparseGrid,
        output_names: Vec<String>,
        rows: &[Vec<f64>],
    ) -> Result<Self, SurrogateError> {
        if rows.len() != grid.len() {
            return Err(SurrogateError::ValueCountMismatch {
                expected: grid.len(),
                got: rows.len(),
            });
        }
        let p = output_names.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(SurrogateError::ValueCountMismatch {
                expected: p,
                got: bad.len(),
            });
        }
        let values = (0..p).map(|k| rows.iter().map(|r| r[k]).collect()).collect();
        Self::new(grid, output_names, values)
    }

    /// Builds by evaluating a scalar function at every grid point.
    pub fn from_fn(
        grid: SparseGrid,
        name: &str,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<Self, SurrogateError> {
        let row = grid.points().iter().map(|p| f(p)).collect();
        Self::new(grid, alloc::vec![name.into()], alloc::vec![row])
    }

    pub fn grid(&self) -> &SparseGrid {
        &self.grid
    }

    pub fn output_names(&self) -> &[String] {
        &self.output_names
    }

    pub fn outputs(&self) -> usize {
        self.output_names.len()
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// Stored values, P × M.
    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn output_position(&self, name: &str) -> Option<usize> {
        self.output_names.iter().position(|n| n == name)
    }

    /// All outputs at `v`.
    pub fn evaluate(&self, v: &[f64]) -> Result<Vec<f64>, SurrogateError> {
        let weights = self.grid.weights_at(v)?;
        Ok(self.values.iter().map(|row| dot(row, &weights)).collect())
    }

    /// A subset of outputs at `v`, in the order given.
    pub fn evaluate_outputs(&self, outputs: &[usize], v: &[f64]) -> Result<Vec<f64>, SurrogateError> {
        let weights = self.grid.weights_at(v)?;
        Ok(outputs.iter().map(|&p| dot(&self.values[p], &weights)).collect())
    }

    /// Keeps only the listed outputs (same grid, no new model evaluations).
    pub fn select_outputs(&self, outputs: &[usize]) -> Surrogate {
        Surrogate {
            grid: self.grid.clone(),
            output_names: outputs.iter().map(|&p| self.output_names[p].clone()).collect(),
            values: outputs.iter().map(|&p| self.values[p].clone()).collect(),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Outcome of comparing the combination technique with the explicit
/// hierarchical sum of detail operators.
#[derive(Debug, Clone, PartialEq)]
pub struct DetailCheck {
    pub passed: bool,
    /// `max |combination − detail sum| / max |combination|` over the samples.
    pub max_relative_difference: f64,
    pub samples: usize,
}

/// Compares `Σ_{i∈I} Δ[U_i](v)` (each detail expanded as
/// `Σ_{j∈{0,1}^N} (−1)^{|j|} U_{i−j}`, with `U` zero whenever a level hits 0)
/// against the combination-technique surrogate at `samples` random points.
///
/// Uniform dimensions are sampled in their box, Gaussian ones in `mean ± 3 std`.
pub fn detail_decomposition_check(
    space: &ParameterSpace,
    set: &MultiIndexSet,
    f: impl Fn(&[f64]) -> f64,
    samples: usize,
    seed: u64,
    tolerance: f64,
) -> Result<DetailCheck, SurrogateError> {
    let grid = SparseGrid::new(space.clone(), set.clone())?;
    let surrogate = Surrogate::from_fn(grid, "f", &f)?;

    // tensor interpolants of f for every index reachable by a detail expansion
    let mut tensors: BTreeMap<MultiIndex, (TensorGrid, Vec<f64>)> = BTreeMap::new();
    let dim = set.dim();
    let mut expansion: Vec<(MultiIndex, f64)> = Vec::new();
    for index in set.indices() {
        'offsets: for mask in 0u64..(1 << dim) {
            let mut levels = Vec::with_capacity(dim);
            for (n, &l) in index.levels().iter().enumerate() {
                let lowered = l - ((mask >> n) & 1) as u32;
                if lowered == 0 {
                    continue 'offsets;
                }
                levels.push(lowered);
            }
            let lower = MultiIndex::new(levels)?;
            if !tensors.contains_key(&lower) {
                let tensor = TensorGrid::new(space, &lower)?;
                let values = tensor.points().iter().map(|p| f(p)).collect();
                tensors.insert(lower.clone(), (tensor, values));
            }
            let sign = if mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            expansion.push((lower, sign));
        }
    }

    let mut rng = crate::rng(seed);
    let mut combination = Vec::with_capacity(samples);
    let mut detail = Vec::with_capacity(samples);
    for _ in 0..samples {
        let v: Vec<f64> = space
            .params()
            .iter()
            .map(|p| match p.distribution {
                Distribution::Uniform { a, b } => rng.random_range(a..=b),
                Distribution::Gaussian { mean, std } => {
                    mean + std * rng.random_range(-3.0..=3.0)
                }
            })
            .collect();
        combination.push(surrogate.evaluate(&v)?[0]);
        let mut sum = 0.0;
        for (index, sign) in &expansion {
            let (tensor, values) = &tensors[index];
            sum += sign * tensor.interpolate(values, &v)?;
        }
        detail.push(sum);
    }
    let scale = combination
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    let max_relative_difference = combination
        .iter()
        .zip(&detail)
        .map(|(a, b)| (a - b).abs() / scale)
        .fold(0.0, f64::max);
    Ok(DetailCheck {
        passed: max_relative_difference <= tolerance,
        max_relative_difference,
        samples,
    })
}
