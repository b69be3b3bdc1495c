//! Principal and total Sobol indices by Monte Carlo on a surrogate.
//!
//! Two independent sample matrices `A`, `B` (M_s × N) and the `N` matrices
//! `A_B^(n)` (A with column `n` taken from `B`) feed the Jansen estimators
//!
//! ```text
//! V_n = V − 1/(2M) Σ_j (f(B_j) − f(A_B^(n)_j))²
//! T_n = 1/(2M) Σ_j (f(A_j) − f(A_B^(n)_j))² / V
//! ```
//!
//! with `V` the sample variance of `f` over `A ∪ B`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats;
use crate::surrogate::{Distribution, ParameterSpace, Surrogate, SurrogateError};

pub const DEFAULT_SAMPLE_SIZE: usize = 16384;
pub const MIN_SAMPLE_SIZE: usize = 1024;
pub const DEFAULT_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GsaError {
    #[error("Sobol indices need uniform dimensions; dimension {dim} ({name}) is not uniform")]
    NonUniformDimension { dim: usize, name: String },
    #[error("sample size {got} is below the minimum of {min}")]
    SampleSizeTooSmall { got: usize, min: usize },
    #[error("threshold {0} is outside (0, 1)")]
    ThresholdOutOfRange(f64),
    #[error("output index {index} out of range for {outputs} outputs")]
    UnknownOutput { index: usize, outputs: usize },
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    /// Seeded pseudorandom draws.
    #[default]
    Random,
    /// Halton sequence with a seeded random shift modulo 1.
    Halton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolOptions {
    pub sample_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub sampler: Sampler,
}

impl Default for SobolOptions {
    fn default() -> Self {
        Self {
            sample_size: DEFAULT_SAMPLE_SIZE,
            seed: 0,
            sampler: Sampler::Random,
        }
    }
}

/// Indices of one output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputIndices {
    pub name: String,
    /// Clipped to [0, 1].
    pub principal: Vec<f64>,
    /// Clipped to [0, 1].
    pub total: Vec<f64>,
    pub principal_raw: Vec<f64>,
    pub total_raw: Vec<f64>,
    /// Three standard errors of each raw principal estimate.
    pub principal_tolerance: Vec<f64>,
    /// Three standard errors of each raw total estimate.
    pub total_tolerance: Vec<f64>,
    pub variance: f64,
    /// Zero sample variance: every index is reported as 0.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolResult {
    pub parameters: Vec<String>,
    pub outputs: Vec<OutputIndices>,
    pub sample_size: usize,
    pub seed: u64,
    pub sampler: Sampler,
}

/// Sobol indices of every surrogate output.
pub fn sobol_indices(surrogate: &Surrogate, options: &SobolOptions) -> Result<SobolResult, GsaError> {
    let space = surrogate.grid().space();
    sobol_indices_with(space, surrogate.output_names(), options, |v| surrogate.evaluate(v))
}

/// Sobol indices of an arbitrary vector function over a uniform space.
pub fn sobol_indices_with(
    space: &ParameterSpace,
    output_names: &[String],
    options: &SobolOptions,
    mut f: impl FnMut(&[f64]) -> Result<Vec<f64>, SurrogateError>,
) -> Result<SobolResult, GsaError> {
    if options.sample_size < MIN_SAMPLE_SIZE {
        return Err(GsaError::SampleSizeTooSmall {
            got: options.sample_size,
            min: MIN_SAMPLE_SIZE,
        });
    }
    let bounds = space
        .params()
        .iter()
        .enumerate()
        .map(|(n, p)| match p.distribution {
            Distribution::Uniform { a, b } => Ok((a, b)),
            Distribution::Gaussian { .. } => Err(GsaError::NonUniformDimension {
                dim: n,
                name: p.name.clone(),
            }),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let dim = bounds.len();
    let m = options.sample_size;
    let p = output_names.len();

    let (a, b) = sample_matrices(&bounds, m, options);
    let fa = a.iter().map(|v| f(v)).collect::<Result<Vec<_>, _>>()?;
    let fb = b.iter().map(|v| f(v)).collect::<Result<Vec<_>, _>>()?;
    let mut fab = Vec::with_capacity(dim);
    let mut row = vec![0.0; dim];
    for n in 0..dim {
        let mut out = Vec::with_capacity(m);
        for (ra, rb) in a.iter().zip(&b) {
            row.copy_from_slice(ra);
            row[n] = rb[n];
            out.push(f(&row)?);
        }
        fab.push(out);
    }

    let mut outputs = Vec::with_capacity(p);
    let mut buf = Vec::with_capacity(2 * m);
    for k in 0..p {
        buf.clear();
        buf.extend(fa.iter().map(|r| r[k]));
        buf.extend(fb.iter().map(|r| r[k]));
        let variance = stats::variance(&buf);
        let scale = buf.iter().fold(0.0f64, |s, x| s.max(x.abs()));
        let degenerate = !(variance > 1e-28 * scale * scale) || variance == 0.0;
        let mut idx = OutputIndices {
            name: output_names[k].clone(),
            principal: vec![0.0; dim],
            total: vec![0.0; dim],
            principal_raw: vec![0.0; dim],
            total_raw: vec![0.0; dim],
            principal_tolerance: vec![0.0; dim],
            total_tolerance: vec![0.0; dim],
            variance,
            degenerate,
        };
        if !degenerate {
            let mut s_terms = Vec::with_capacity(m);
            let mut t_terms = Vec::with_capacity(m);
            for (n, fab_n) in fab.iter().enumerate() {
                s_terms.clear();
                t_terms.clear();
                for j in 0..m {
                    let dab = fb[j][k] - fab_n[j][k];
                    let dta = fa[j][k] - fab_n[j][k];
                    s_terms.push(0.5 * dab * dab);
                    t_terms.push(0.5 * dta * dta);
                }
                let s_mean = stats::mean(&s_terms);
                let t_mean = stats::mean(&t_terms);
                let se = |terms: &[f64]| Float::sqrt(stats::variance(terms) / m as f64) / variance;
                let s_raw = (variance - s_mean) / variance;
                let t_raw = t_mean / variance;
                idx.principal_raw[n] = s_raw;
                idx.total_raw[n] = t_raw;
                idx.principal[n] = s_raw.clamp(0.0, 1.0);
                idx.total[n] = t_raw.clamp(0.0, 1.0);
                idx.principal_tolerance[n] = 3.0 * se(&s_terms);
                idx.total_tolerance[n] = 3.0 * se(&t_terms);
            }
        }
        outputs.push(idx);
    }
    Ok(SobolResult {
        parameters: space.names().map(String::from).collect(),
        outputs,
        sample_size: m,
        seed: options.seed,
        sampler: options.sampler,
    })
}

fn sample_matrices(
    bounds: &[(f64, f64)],
    m: usize,
    options: &SobolOptions,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let dim = bounds.len();
    let mut rng = crate::rng(options.seed);
    let mut a = Vec::with_capacity(m);
    let mut b = Vec::with_capacity(m);
    match options.sampler {
        Sampler::Random => {
            for _ in 0..m {
                a.push(bounds.iter().map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>()).collect());
            }
            for _ in 0..m {
                b.push(bounds.iter().map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>()).collect());
            }
        }
        Sampler::Halton => {
            let primes = first_primes(2 * dim);
            let shift: Vec<f64> = (0..2 * dim).map(|_| rng.random::<f64>()).collect();
            for j in 0..m {
                let u = |c: usize| {
                    let x = radical_inverse(j as u64 + 1, primes[c]) + shift[c];
                    x - Float::floor(x)
                };
                a.push(bounds.iter().enumerate().map(|(n, &(lo, hi))| lo + (hi - lo) * u(n)).collect());
                b.push(
                    bounds
                        .iter()
                        .enumerate()
                        .map(|(n, &(lo, hi))| lo + (hi - lo) * u(dim + n))
                        .collect(),
                );
            }
        }
    }
    (a, b)
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

fn first_primes(n: usize) -> Vec<u64> {
    let mut primes: Vec<u64> = Vec::with_capacity(n);
    let mut c = 2u64;
    while primes.len() < n {
        if primes.iter().all(|p| !c.is_multiple_of(*p)) {
            primes.push(c);
        }
        c += 1;
    }
    primes
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ranking {
    pub keep: Vec<usize>,
    pub drop: Vec<usize>,
}

/// Drops every dimension whose total index stays below `threshold` on all of
/// the `participating` outputs.
pub fn rank_parameters(
    result: &SobolResult,
    threshold: f64,
    participating: &[usize],
) -> Result<Ranking, GsaError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(GsaError::ThresholdOutOfRange(threshold));
    }
    if let Some(&index) = participating.iter().find(|&&k| k >= result.outputs.len()) {
        return Err(GsaError::UnknownOutput {
            index,
            outputs: result.outputs.len(),
        });
    }
    let mut keep = Vec::new();
    let mut drop = Vec::new();
    for n in 0..result.parameters.len() {
        let max_total = participating
            .iter()
            .map(|&k| result.outputs[k].total[n])
            .fold(0.0, f64::max);
        if max_total < threshold {
            drop.push(n);
        } else {
            keep.push(n);
        }
    }
    Ok(Ranking { keep, drop })
}

/// Analytic principal and total indices of the Ishigami function with
/// parameters `a`, `b` on `[−π, π]³`.
pub fn ishigami_analytic(a: f64, b: f64) -> ([f64; 3], [f64; 3]) {
    let pi = core::f64::consts::PI;
    let pi4 = Float::powi(pi, 4);
    let pi8 = pi4 * pi4;
    let d1 = b * pi4 / 5.0 + b * b * pi8 / 50.0 + 0.5;
    let d2 = a * a / 8.0;
    let d13 = 8.0 * b * b * pi8 / 225.0;
    let d = d1 + d2 + d13;
    ([d1 / d, d2 / d, 0.0], [(d1 + d13) / d, d2 / d, d13 / d])
}
