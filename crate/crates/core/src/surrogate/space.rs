use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::SurrogateError;
use crate::knots::KnotFamily;

/// Marginal distribution of one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Uniform { a: f64, b: f64 },
    Gaussian { mean: f64, std: f64 },
}

impl Distribution {
    pub fn knot_family(&self) -> KnotFamily {
        match *self {
            Distribution::Uniform { a, b } => KnotFamily::SymmetricLeja { a, b },
            Distribution::Gaussian { mean, std } => KnotFamily::SymmetricGaussianLeja { mean, std },
        }
    }

    /// Length scale used to normalize distances: `b - a` or the standard deviation.
    pub fn scale(&self) -> f64 {
        match *self {
            Distribution::Uniform { a, b } => b - a,
            Distribution::Gaussian { std, .. } => std,
        }
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        match *self {
            Distribution::Uniform { a, b } => Some((a, b)),
            Distribution::Gaussian { .. } => None,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Distribution::Uniform { a, b } => 0.5 * (a + b),
            Distribution::Gaussian { mean, .. } => mean,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Distribution::Uniform { a, b } => (b - a) * (b - a) / 12.0,
            Distribution::Gaussian { std, .. } => std * std,
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, Distribution::Uniform { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub distribution: Distribution,
}

/// Ordered list of named parameters with independent marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Parameter>", into = "Vec<Parameter>")]
pub struct ParameterSpace {
    dims: Vec<Parameter>,
}

impl ParameterSpace {
    pub fn new(dims: Vec<Parameter>) -> Result<Self, SurrogateError> {
        if dims.is_empty() {
            return Err(SurrogateError::EmptySpace);
        }
        for (n, p) in dims.iter().enumerate() {
            p.distribution
                .knot_family()
                .validate()
                .map_err(|source| SurrogateError::InvalidParameter { dim: n, source })?;
            if dims[..n].iter().any(|q| q.name == p.name) {
                return Err(SurrogateError::DuplicateName(p.name.clone()));
            }
        }
        Ok(Self { dims })
    }

    /// Convenience constructor for all-uniform spaces.
    pub fn uniform(ranges: &[(&str, f64, f64)]) -> Result<Self, SurrogateError> {
        Self::new(
            ranges
                .iter()
                .map(|&(name, a, b)| Parameter {
                    name: name.into(),
                    distribution: Distribution::Uniform { a, b },
                })
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn params(&self) -> &[Parameter] {
        &self.dims
    }

    pub fn distribution(&self, n: usize) -> &Distribution {
        &self.dims[n].distribution
    }

    pub fn names(&self) -> impl Iterator<Item = &str> + '_ {
        self.dims.iter().map(|p| p.name.as_str())
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.dims.iter().position(|p| p.name == name)
    }

    pub fn all_uniform(&self) -> bool {
        self.dims.iter().all(|p| p.distribution.is_uniform())
    }

    /// True when every uniform coordinate of `v` lies inside its interval.
    pub fn contains(&self, v: &[f64]) -> bool {
        self.dims.iter().zip(v).all(|(p, &x)| match p.distribution.bounds() {
            Some((a, b)) => x >= a && x <= b,
            None => true,
        })
    }
}

impl TryFrom<Vec<Parameter>> for ParameterSpace {
    type Error = SurrogateError;

    fn try_from(dims: Vec<Parameter>) -> Result<Self, Self::Error> {
        Self::new(dims)
    }
}

impl From<ParameterSpace> for Vec<Parameter> {
    fn from(space: ParameterSpace) -> Self {
        space.dims
    }
}
