//! Forward propagation: posterior sampling, surrogate evaluation and kernel
//! density estimates of each quantity of interest.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inversion::PosteriorSpec;
use crate::stats;
use crate::surrogate::{Distribution, Surrogate, SurrogateError};

pub const DEFAULT_SAMPLES: usize = 10_000;
pub const DEFAULT_GRID_SIZE: usize = 512;
pub const MIN_DENSITY_VALUES: usize = 100;
/// Truncated Gaussians with a smaller in-box mass are rejected as pathological.
pub const MIN_ACCEPTANCE: f64 = 0.01;
/// Kernel contributions beyond this many bandwidths are skipped (`e^{-18}`).
const KERNEL_CUTOFF: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForwardError {
    #[error("dimension {dim}: truncation to the prior box keeps only {acceptance:e} of the Gaussian mass")]
    LowAcceptance { dim: usize, acceptance: f64 },
    #[error("need at least {min} values for a density estimate, got {got}")]
    TooFewValues { got: usize, min: usize },
    #[error("sample count must be positive")]
    NoSamples,
    #[error("sample {sample}: {source}")]
    Evaluation { sample: usize, source: SurrogateError },
    #[error("output {output}: non-finite value at sample {sample}")]
    NonFinite { output: usize, sample: usize },
    #[error("spec has {spec} dimensions but the surrogate has {surrogate}")]
    DimensionMismatch { spec: usize, surrogate: usize },
    #[error("output index {index} out of range for {outputs} outputs")]
    UnknownOutput { index: usize, outputs: usize },
    #[error("grid size must be at least 2, got {0}")]
    GridTooSmall(usize),
}

/// Independent draws from the marginals of `spec`; Gaussian marginals are
/// truncated to `spec.bounds` by rejection.
pub fn sample_posterior(spec: &PosteriorSpec, n: usize, seed: u64) -> Result<Vec<Vec<f64>>, ForwardError> {
    if n == 0 {
        return Err(ForwardError::NoSamples);
    }
    for (dim, m) in spec.marginals.iter().enumerate() {
        if let (Distribution::Gaussian { mean, std }, Some(&(a, b))) = (m.distribution, spec.bounds.get(dim)) {
            let acceptance = stats::normal_cdf((b - mean) / std) - stats::normal_cdf((a - mean) / std);
            if !(acceptance >= MIN_ACCEPTANCE) {
                return Err(ForwardError::LowAcceptance { dim, acceptance });
            }
        }
    }
    let mut rng = crate::rng(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let v = spec
            .marginals
            .iter()
            .enumerate()
            .map(|(dim, m)| match m.distribution {
                Distribution::Uniform { a, b } => a + (b - a) * rng.random::<f64>(),
                Distribution::Gaussian { mean, std } => {
                    let (lo, hi) = spec
                        .bounds
                        .get(dim)
                        .copied()
                        .unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
                    loop {
                        let z: f64 = rng.sample(StandardNormal);
                        let x = mean + std * z;
                        if x >= lo && x <= hi {
                            break x;
                        }
                    }
                }
            })
            .collect();
        out.push(v);
    }
    Ok(out)
}

/// Surrogate outputs at every sample, `result[p][s]` for `p` in `outputs`.
pub fn propagate(
    surrogate: &Surrogate,
    outputs: &[usize],
    samples: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>, ForwardError> {
    if let Some(&index) = outputs.iter().find(|&&p| p >= surrogate.outputs()) {
        return Err(ForwardError::UnknownOutput {
            index,
            outputs: surrogate.outputs(),
        });
    }
    let mut result = vec![Vec::with_capacity(samples.len()); outputs.len()];
    for (sample, v) in samples.iter().enumerate() {
        let values = surrogate
            .evaluate_outputs(outputs, v)
            .map_err(|source| ForwardError::Evaluation { sample, source })?;
        for (q, (row, x)) in result.iter_mut().zip(values).enumerate() {
            if !x.is_finite() {
                return Err(ForwardError::NonFinite { output: outputs[q], sample });
            }
            row.push(x);
        }
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    #[serde(skip)]
    pub samples: Vec<f64>,
    pub sample_count: usize,
    /// Silverman bandwidth; zero when degenerate.
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    /// Argmax of the density on the grid.
    pub mode: f64,
    /// Empirical quantiles of the samples.
    pub q05: f64,
    pub q95: f64,
    /// All samples equal: the density is undefined and `mode` is that value.
    pub degenerate: bool,
}

impl DensityEstimate {
    pub fn band_width(&self) -> f64 {
        self.q95 - self.q05
    }

    /// Trapezoid rule over the evaluation grid.
    pub fn integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
            .sum()
    }

    /// Grid spacing (the mode's resolution).
    pub fn resolution(&self) -> f64 {
        match self.grid.len() {
            0 | 1 => 0.0,
            n => (self.grid[n - 1] - self.grid[0]) / (n - 1) as f64,
        }
    }
}

/// `0.9 · min(σ̂, IQR/1.34) · n^{−1/5}`, falling back to whichever spread is positive.
pub fn silverman_bandwidth(sorted: &[f64]) -> f64 {
    let sd = Float::sqrt(stats::variance(sorted));
    let iqr = stats::quantile_sorted(sorted, 0.75) - stats::quantile_sorted(sorted, 0.25);
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr / 1.34),
        (true, false) => sd,
        (false, true) => iqr / 1.34,
        (false, false) => 0.0,
    };
    0.9 * spread * Float::powf(sorted.len() as f64, -0.2)
}

/// Gaussian-kernel density estimate on `grid_size` points spanning
/// `[min − 3h, max + 3h]`.
pub fn estimate_density(values: &[f64], grid_size: usize) -> Result<DensityEstimate, ForwardError> {
    if values.len() < MIN_DENSITY_VALUES {
        return Err(ForwardError::TooFewValues {
            got: values.len(),
            min: MIN_DENSITY_VALUES,
        });
    }
    if grid_size < 2 {
        return Err(ForwardError::GridTooSmall(grid_size));
    }
    let sorted = stats::sorted(values);
    let n = sorted.len();
    let q05 = stats::quantile_sorted(&sorted, 0.05);
    let q95 = stats::quantile_sorted(&sorted, 0.95);
    let (min, max) = (sorted[0], sorted[n - 1]);
    let h = silverman_bandwidth(&sorted);
    if !(h > 0.0) || min == max {
        return Ok(DensityEstimate {
            samples: values.to_vec(),
            sample_count: n,
            bandwidth: 0.0,
            grid: Vec::new(),
            density: Vec::new(),
            mode: min,
            q05,
            q95,
            degenerate: true,
        });
    }
    let lo = min - 3.0 * h;
    let hi = max + 3.0 * h;
    let grid: Vec<f64> = (0..grid_size)
        .map(|i| lo + (hi - lo) * i as f64 / (grid_size - 1) as f64)
        .collect();
    let norm = 1.0 / (n as f64 * h * Float::sqrt(2.0 * core::f64::consts::PI));
    let reach = KERNEL_CUTOFF * h;
    let mut density = Vec::with_capacity(grid_size);
    let mut start = 0;
    for &x in &grid {
        while start < n && sorted[start] < x - reach {
            start += 1;
        }
        let mut sum = 0.0;
        for &s in &sorted[start..] {
            if s > x + reach {
                break;
            }
            let z = (x - s) / h;
            sum += Float::exp(-0.5 * z * z);
        }
        density.push(sum * norm);
    }
    let mut best = 0;
    for (i, &d) in density.iter().enumerate() {
        if d > density[best] {
            best = i;
        }
    }
    Ok(DensityEstimate {
        samples: values.to_vec(),
        sample_count: n,
        bandwidth: h,
        mode: grid[best],
        grid,
        density,
        q05,
        q95,
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationBand {
    /// Output index in the surrogate.
    pub output: usize,
    pub name: String,
    pub prior: DensityEstimate,
    pub posterior: DensityEstimate,
}

/// Propagates `n` draws of `spec` through `surrogate` and estimates one density per output.
pub fn propagate_spec(
    spec: &PosteriorSpec,
    surrogate: &Surrogate,
    outputs: &[usize],
    n: usize,
    seed: u64,
    grid_size: usize,
) -> Result<Vec<DensityEstimate>, ForwardError> {
    if spec.dim() != surrogate.dim() {
        return Err(ForwardError::DimensionMismatch {
            spec: spec.dim(),
            surrogate: surrogate.dim(),
        });
    }
    let samples = sample_posterior(spec, n, seed)?;
    propagate(surrogate, outputs, &samples)?
        .iter()
        .map(|row| estimate_density(row, grid_size))
        .collect()
}

/// Prior- and posterior-based densities per output, both from `n` draws with the same seed.
#[allow(clippy::too_many_arguments)]
pub fn uncertainty_bands(
    prior: &PosteriorSpec,
    prior_surrogate: &Surrogate,
    posterior: &PosteriorSpec,
    posterior_surrogate: &Surrogate,
    outputs: &[usize],
    n: usize,
    seed: u64,
    grid_size: usize,
) -> Result<Vec<LocationBand>, ForwardError> {
    let before = propagate_spec(prior, prior_surrogate, outputs, n, seed, grid_size)?;
    let after = propagate_spec(posterior, posterior_surrogate, outputs, n, seed, grid_size)?;
    Ok(outputs
        .iter()
        .zip(before.into_iter().zip(after))
        .map(|(&output, (prior, posterior))| LocationBand {
            output,
            name: posterior_surrogate.output_names()[output].clone(),
            prior,
            posterior,
        })
        .collect())
}
