//! Bayesian inversion with a uniform prior box and Gaussian measurement noise.
//!
//! The misfits `M_k(v) = ũ_k − S u_k(v)` are taken against a surrogate (or any
//! [`Predictor`]); the MAP point minimizes `LS(v) = Σ M_k²`. The posterior is
//! then assembled per dimension from a Laplace covariance and fixed-slice
//! profile likelihoods: Gaussian where the profile is sharp, uniform over the
//! profile's confidence set where it is flat.

mod laplace;
mod nelder_mead;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use laplace::{laplace_covariance, laplace_covariance_on, FiniteDifferenceSteps, Laplace};
pub use nelder_mead::{nelder_mead, NelderMeadOptions, NelderMeadResult};

use crate::models::{Model, ModelError};
use crate::surrogate::{Distribution, ParameterSpace, Surrogate, SurrogateError};

pub const DEFAULT_STARTS: usize = 16;
pub const MIN_STARTS: usize = 4;
pub const MIN_PROFILE_POINTS: usize = 33;
pub const DEFAULT_PROFILE_POINTS: usize = 201;
/// Box-normalized distance under which converged points are one cluster.
pub const CLUSTER_RADIUS: f64 = 1e-3;
/// 95% quantile of the chi-square distribution with one degree of freedom.
pub const DEFAULT_CONFIDENCE_FACTOR: f64 = 3.84;
pub const DEFAULT_FLATNESS_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InversionError {
    #[error("noise standard deviation must be positive, got {0}")]
    NonPositiveNoise(f64),
    #[error("target component {dim} = {value} lies outside the prior box [{lower}, {upper}]")]
    TargetOutsideBox {
        dim: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("location {location} is not an output (model has {outputs})")]
    LocationOutOfRange { location: usize, outputs: usize },
    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("prior of dimension {dim} ({name}) must be uniform")]
    NonUniformPrior { dim: usize, name: String },
    #[error("need at least {min} starts, got {got}")]
    TooFewStarts { got: usize, min: usize },
    #[error("no local minimum inside the prior box ({} found outside)", minima.len())]
    NoInBoundsMinimum { minima: Vec<LocalMinimum> },
    #[error("J^T J is singular; null direction {null_direction:?} (eigenvalue ratio {ratio:e})")]
    RankDeficient { null_direction: Vec<f64>, ratio: f64 },
    #[error("profile needs at least {min} points, got {got}")]
    ProfileTooShort { got: usize, min: usize },
    #[error(
        "empty confidence set for dimension {dim}: profile minimum {profile_min:e}, LS_min {ls_min:e}, threshold {threshold:e}"
    )]
    EmptyConfidenceSet {
        dim: usize,
        profile_min: f64,
        ls_min: f64,
        threshold: f64,
    },
    #[error("no profile supplied for dimension {0}")]
    MissingProfile(usize),
    #[error("covariance does not cover identifiable dimension {0}")]
    MissingVariance(usize),
    #[error("non-positive posterior variance {variance:e} for dimension {dim}")]
    NonPositiveVariance { dim: usize, variance: f64 },
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Anything that maps parameters to the `K` predicted measurements.
pub trait Predictor {
    fn predict(&self, v: &[f64]) -> Result<Vec<f64>, InversionError>;
}

impl<F: Fn(&[f64]) -> Vec<f64>> Predictor for F {
    fn predict(&self, v: &[f64]) -> Result<Vec<f64>, InversionError> {
        Ok(self(v))
    }
}

/// Surrogate outputs at the measurement locations.
#[derive(Debug, Clone, Copy)]
pub struct SurrogatePredictor<'a> {
    pub surrogate: &'a Surrogate,
    pub locations: &'a [usize],
}

impl Predictor for SurrogatePredictor<'_> {
    fn predict(&self, v: &[f64]) -> Result<Vec<f64>, InversionError> {
        Ok(self.surrogate.evaluate_outputs(self.locations, v)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurements {
    /// Output indices of the measured quantities.
    pub location_ids: Vec<usize>,
    pub values: Vec<f64>,
    pub noise_std: f64,
    /// Present when the data were synthesized.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<f64>>,
}

impl Measurements {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self) -> Result<(), InversionError> {
        if !(self.noise_std > 0.0) {
            return Err(InversionError::NonPositiveNoise(self.noise_std));
        }
        if self.location_ids.len() != self.values.len() {
            return Err(InversionError::LengthMismatch {
                what: "measurement values",
                expected: self.location_ids.len(),
                got: self.values.len(),
            });
        }
        Ok(())
    }
}

/// `ũ_k = u_k(v̄) + ε_k`, `ε_k ~ N(0, σ̄²)` i.i.d., from the full model output
/// vector at `v̄`.
pub fn synthesize_from_outputs(
    outputs_at_target: &[f64],
    target: &[f64],
    location_ids: &[usize],
    noise_std: f64,
    seed: u64,
) -> Result<Measurements, InversionError> {
    if !(noise_std > 0.0) {
        return Err(InversionError::NonPositiveNoise(noise_std));
    }
    let mut rng = crate::rng(seed);
    let values = location_ids
        .iter()
        .map(|&k| {
            let clean = *outputs_at_target
                .get(k)
                .ok_or(InversionError::LocationOutOfRange {
                    location: k,
                    outputs: outputs_at_target.len(),
                })?;
            let eps: f64 = rng.sample(StandardNormal);
            Ok(clean + noise_std * eps)
        })
        .collect::<Result<Vec<_>, InversionError>>()?;
    Ok(Measurements {
        location_ids: location_ids.to_vec(),
        values,
        noise_std,
        seed: Some(seed),
        target: Some(target.to_vec()),
    })
}

/// Runs `model` at `target` and perturbs the selected outputs with seeded noise.
pub fn synthesize_data(
    model: &dyn Model,
    bounds: &[(f64, f64)],
    target: &[f64],
    location_ids: &[usize],
    noise_std: f64,
    seed: u64,
) -> Result<Measurements, InversionError> {
    check_inside(bounds, target)?;
    let outputs = model.evaluate(target)?;
    synthesize_from_outputs(&outputs, target, location_ids, noise_std, seed)
}

fn check_inside(bounds: &[(f64, f64)], v: &[f64]) -> Result<(), InversionError> {
    if bounds.len() != v.len() {
        return Err(InversionError::LengthMismatch {
            what: "parameter vector",
            expected: bounds.len(),
            got: v.len(),
        });
    }
    for (dim, (&(lower, upper), &value)) in bounds.iter().zip(v).enumerate() {
        if !(value >= lower && value <= upper) {
            return Err(InversionError::TargetOutsideBox {
                dim,
                value,
                lower,
                upper,
            });
        }
    }
    Ok(())
}

/// The uniform prior box of a space, rejecting Gaussian dimensions.
pub fn prior_box(space: &ParameterSpace) -> Result<Vec<(f64, f64)>, InversionError> {
    space
        .params()
        .iter()
        .enumerate()
        .map(|(dim, p)| match p.distribution {
            Distribution::Uniform { a, b } => Ok((a, b)),
            Distribution::Gaussian { .. } => Err(InversionError::NonUniformPrior {
                dim,
                name: p.name.clone(),
            }),
        })
        .collect()
}

/// Least-squares and likelihood functionals of one data set.
pub struct InverseProblem<'a, P: Predictor> {
    pub predictor: P,
    pub data: &'a Measurements,
    pub bounds: Vec<(f64, f64)>,
}

impl<'a, P: Predictor> InverseProblem<'a, P> {
    pub fn new(predictor: P, data: &'a Measurements, bounds: Vec<(f64, f64)>) -> Result<Self, InversionError> {
        data.validate()?;
        Ok(Self {
            predictor,
            data,
            bounds,
        })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn ranges(&self) -> Vec<f64> {
        self.bounds.iter().map(|(a, b)| b - a).collect()
    }

    /// `M_k(v) = ũ_k − S u_k(v)`.
    pub fn misfits(&self, v: &[f64]) -> Result<Vec<f64>, InversionError> {
        let predicted = self.predictor.predict(v)?;
        if predicted.len() != self.data.len() {
            return Err(InversionError::LengthMismatch {
                what: "predictions",
                expected: self.data.len(),
                got: predicted.len(),
            });
        }
        Ok(self.data.values.iter().zip(&predicted).map(|(d, p)| d - p).collect())
    }

    pub fn least_squares(&self, v: &[f64]) -> Result<f64, InversionError> {
        Ok(self.misfits(v)?.iter().map(|m| m * m).sum())
    }

    pub fn log_likelihood(&self, v: &[f64]) -> Result<f64, InversionError> {
        Ok(log_likelihood(
            self.least_squares(v)?,
            self.data.len(),
            self.data.noise_std,
        ))
    }

    fn to_box(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.bounds)
            .map(|(x, (a, b))| a + x * (b - a))
            .collect()
    }

    fn to_unit(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.bounds)
            .map(|(x, (a, b))| (x - a) / (b - a))
            .collect()
    }
}

/// `−K/2 · log(2πσ²) − LS/(2σ²)`.
pub fn log_likelihood(ls: f64, k: usize, noise_std: f64) -> f64 {
    let s2 = noise_std * noise_std;
    -0.5 * k as f64 * Float::ln(2.0 * core::f64::consts::PI * s2) - ls / (2.0 * s2)
}

/// `σ²_MAP = LS_min / K`.
pub fn sigma_map(ls_min: f64, k: usize) -> f64 {
    ls_min / k as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalMinimum {
    pub v: Vec<f64>,
    pub ls: f64,
    pub start: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub in_bounds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimumCluster {
    /// Lowest-LS member.
    pub v: Vec<f64>,
    pub ls: f64,
    /// Indices into [`MapResult::minima`].
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapResult {
    pub v_map: Vec<f64>,
    pub ls_min: f64,
    pub minima: Vec<LocalMinimum>,
    /// Clusters of in-bounds minima, by increasing LS.
    pub clusters: Vec<MinimumCluster>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapOptions {
    pub n_starts: usize,
    pub seed: u64,
    pub nelder_mead: NelderMeadOptions,
}

impl Default for MapOptions {
    fn default() -> Self {
        Self {
            n_starts: DEFAULT_STARTS,
            seed: 0,
            nelder_mead: NelderMeadOptions::default(),
        }
    }
}

/// Latin hypercube of `n` points in `[0, 1]^dim`.
pub fn latin_hypercube(n: usize, dim: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; dim]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for d in 0..dim {
        strata.shuffle(rng);
        for (p, &s) in points.iter_mut().zip(&strata) {
            p[d] = (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    points
}

/// Multi-start Nelder–Mead on `LS` from Latin-hypercube starts.
///
/// The simplex works in box-normalized coordinates. Outside the box the
/// objective is `LS` at the projected point plus a quadratic penalty on the
/// normalized violation, so the search stays well-posed without clamping the
/// simplex itself. Minima that still end outside the box are kept in the
/// report but never selected.
pub fn find_map<P: Predictor>(
    problem: &InverseProblem<'_, P>,
    options: &MapOptions,
) -> Result<MapResult, InversionError> {
    if options.n_starts < MIN_STARTS {
        return Err(InversionError::TooFewStarts {
            got: options.n_starts,
            min: MIN_STARTS,
        });
    }
    let dim = problem.dim();
    let mut rng = crate::rng(options.seed);
    let starts = latin_hypercube(options.n_starts, dim, &mut rng);
    let energy: f64 = problem.data.values.iter().map(|x| x * x).sum();
    let penalty_weight = 1e2 * (energy + problem.data.len() as f64 * Float::powi(problem.data.noise_std, 2));

    let objective = |u: &[f64]| -> Result<f64, InversionError> {
        let mut violation = 0.0;
        let clamped: Vec<f64> = u
            .iter()
            .map(|&x| {
                let c = x.clamp(0.0, 1.0);
                violation += (x - c) * (x - c);
                c
            })
            .collect();
        Ok(problem.least_squares(&problem.to_box(&clamped))? + penalty_weight * violation)
    };

    let mut minima = Vec::with_capacity(starts.len());
    for start in &starts {
        let r = nelder_mead(objective, start, &options.nelder_mead)?;
        let tol = options.nelder_mead.diameter_tolerance;
        let in_bounds = r.x.iter().all(|&x| x >= -tol && x <= 1.0 + tol);
        let unit: Vec<f64> = r.x.iter().map(|x| x.clamp(0.0, 1.0)).collect();
        let v = problem.to_box(if in_bounds { &unit } else { &r.x });
        let ls = if in_bounds { problem.least_squares(&v)? } else { r.value };
        minima.push(LocalMinimum {
            v,
            ls,
            start: problem.to_box(start),
            iterations: r.iterations,
            converged: r.converged,
            in_bounds,
        });
    }

    let mut order: Vec<usize> = (0..minima.len()).filter(|&i| minima[i].in_bounds).collect();
    if order.is_empty() {
        return Err(InversionError::NoInBoundsMinimum { minima });
    }
    order.sort_by(|&a, &b| minima[a].ls.total_cmp(&minima[b].ls).then(a.cmp(&b)));
    let mut clusters: Vec<MinimumCluster> = Vec::new();
    for &i in &order {
        let u = problem.to_unit(&minima[i].v);
        let home = clusters.iter_mut().find(|c| {
            let cu = problem.to_unit(&c.v);
            let d2: f64 = cu.iter().zip(&u).map(|(a, b)| (a - b) * (a - b)).sum();
            Float::sqrt(d2) <= CLUSTER_RADIUS
        });
        match home {
            Some(c) => c.members.push(i),
            None => clusters.push(MinimumCluster {
                v: minima[i].v.clone(),
                ls: minima[i].ls,
                members: vec![i],
            }),
        }
    }
    Ok(MapResult {
        v_map: clusters[0].v.clone(),
        ls_min: clusters[0].ls,
        minima,
        clusters,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub dim: usize,
    /// The point whose other coordinates are held fixed.
    pub anchor: Vec<f64>,
    pub x: Vec<f64>,
    pub ls: Vec<f64>,
}

/// `LS` along dimension `dim` over its prior range, other coordinates fixed at `anchor`.
pub fn profile_likelihood<P: Predictor>(
    problem: &InverseProblem<'_, P>,
    dim: usize,
    anchor: &[f64],
    points: usize,
) -> Result<Profile, InversionError> {
    if points < MIN_PROFILE_POINTS {
        return Err(InversionError::ProfileTooShort {
            got: points,
            min: MIN_PROFILE_POINTS,
        });
    }
    if anchor.len() != problem.dim() {
        return Err(InversionError::LengthMismatch {
            what: "profile anchor",
            expected: problem.dim(),
            got: anchor.len(),
        });
    }
    let (a, b) = problem.bounds[dim];
    let mut v = anchor.to_vec();
    let mut x = Vec::with_capacity(points);
    let mut ls = Vec::with_capacity(points);
    for i in 0..points {
        let xi = if i + 1 == points {
            b
        } else {
            a + (b - a) * i as f64 / (points - 1) as f64
        };
        v[dim] = xi;
        x.push(xi);
        ls.push(problem.least_squares(&v)?);
    }
    Ok(Profile {
        dim,
        anchor: anchor.to_vec(),
        x,
        ls,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Identifiability {
    Identifiable,
    WeaklyIdentifiable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub name: String,
    pub distribution: Distribution,
    pub classification: Identifiability,
    /// Extent of the profile-likelihood confidence set.
    pub confidence_set: (f64, f64),
    /// Extent divided by the prior range.
    pub confidence_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorOptions {
    pub confidence_factor: f64,
    pub flatness_fraction: f64,
}

impl Default for PosteriorOptions {
    fn default() -> Self {
        Self {
            confidence_factor: DEFAULT_CONFIDENCE_FACTOR,
            flatness_fraction: DEFAULT_FLATNESS_FRACTION,
        }
    }
}

/// Independent per-dimension posterior marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSpec {
    pub marginals: Vec<Marginal>,
    /// The prior box, used to truncate Gaussian marginals when sampling.
    pub bounds: Vec<(f64, f64)>,
    pub v_map: Vec<f64>,
    pub sigma2_map: f64,
    pub covariance: Vec<Vec<f64>>,
    /// Dimensions indexing the rows and columns of `covariance`.
    pub covariance_dims: Vec<usize>,
    /// Marginals are treated as independent; this is an assumption, not a test result.
    pub independence_assumed: bool,
}

impl PosteriorSpec {
    /// The prior itself as a spec: uniform marginals over the whole box.
    pub fn from_prior(space: &ParameterSpace) -> Result<Self, InversionError> {
        let bounds = prior_box(space)?;
        Ok(Self {
            marginals: space
                .params()
                .iter()
                .zip(&bounds)
                .map(|(p, &(a, b))| Marginal {
                    name: p.name.clone(),
                    distribution: Distribution::Uniform { a, b },
                    classification: Identifiability::WeaklyIdentifiable,
                    confidence_set: (a, b),
                    confidence_fraction: 1.0,
                })
                .collect(),
            v_map: bounds.iter().map(|(a, b)| 0.5 * (a + b)).collect(),
            bounds,
            sigma2_map: 0.0,
            covariance: Vec::new(),
            covariance_dims: Vec::new(),
            independence_assumed: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    /// Parameter space whose knot families match the marginals.
    pub fn space(&self) -> Result<ParameterSpace, SurrogateError> {
        ParameterSpace::new(
            self.marginals
                .iter()
                .map(|m| crate::surrogate::Parameter {
                    name: m.name.clone(),
                    distribution: m.distribution,
                })
                .collect(),
        )
    }
}

/// Classifies every dimension from its profile and assembles the marginals.
pub fn build_posterior(
    names: &[String],
    map: &MapResult,
    sigma2_map: f64,
    laplace: &Laplace,
    profiles: &[Profile],
    bounds: &[(f64, f64)],
    options: &PosteriorOptions,
) -> Result<PosteriorSpec, InversionError> {
    let threshold = options.confidence_factor * sigma2_map;
    let mut marginals = Vec::with_capacity(bounds.len());
    for (dim, &(a, b)) in bounds.iter().enumerate() {
        let profile = profiles
            .iter()
            .find(|p| p.dim == dim)
            .ok_or(InversionError::MissingProfile(dim))?;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (&x, &ls) in profile.x.iter().zip(&profile.ls) {
            if ls - map.ls_min <= threshold {
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
        if lo > hi {
            return Err(InversionError::EmptyConfidenceSet {
                dim,
                profile_min: profile.ls.iter().copied().fold(f64::INFINITY, f64::min),
                ls_min: map.ls_min,
                threshold,
            });
        }
        let (lo, hi) = (lo.max(a), hi.min(b));
        let fraction = (hi - lo) / (b - a);
        let (distribution, classification) = if fraction > options.flatness_fraction {
            (Distribution::Uniform { a: lo, b: hi }, Identifiability::WeaklyIdentifiable)
        } else {
            let row = laplace
                .dims
                .iter()
                .position(|&d| d == dim)
                .ok_or(InversionError::MissingVariance(dim))?;
            let variance = laplace.covariance[row][row];
            if !(variance > 0.0) {
                return Err(InversionError::NonPositiveVariance { dim, variance });
            }
            (
                Distribution::Gaussian {
                    mean: map.v_map[dim],
                    std: Float::sqrt(variance),
                },
                Identifiability::Identifiable,
            )
        };
        marginals.push(Marginal {
            name: names.get(dim).cloned().unwrap_or_default(),
            distribution,
            classification,
            confidence_set: (lo, hi),
            confidence_fraction: fraction,
        });
    }
    Ok(PosteriorSpec {
        marginals,
        bounds: bounds.to_vec(),
        v_map: map.v_map.clone(),
        sigma2_map,
        covariance: laplace.covariance.clone(),
        covariance_dims: laplace.dims.clone(),
        independence_assumed: true,
    })
}
