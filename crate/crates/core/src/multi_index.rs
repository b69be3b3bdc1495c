//! Multi-index sets and combination-technique coefficients.
//!
//! A multi-index `i = (i_1, ..., i_N)` with every `i_n >= 1` selects one
//! tensor interpolant; a downward-closed set of them defines a sparse grid.
//! Sets are always kept in lexicographic order so that anything derived
//! from them (coefficients, grids, serialized output) is deterministic.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MultiIndexError {
    #[error("multi-index set dimension must be at least 1")]
    ZeroDimension,
    #[error("multi-index component {position} is {value}; levels start at 1")]
    ZeroLevel { position: usize, value: u32 },
    #[error("multi-index {index} has length {got}, expected {expected}")]
    LengthMismatch {
        index: MultiIndex,
        expected: usize,
        got: usize,
    },
    #[error("multi-index set is empty")]
    Empty,
    #[error("explicit multi-index sets are built from a list of indices, not generated")]
    ExplicitKind,
    #[error("multi-index set is not downward-closed: {index} is missing backward neighbour {missing}")]
    NotDownwardClosed { index: MultiIndex, missing: MultiIndex },
}

/// A vector of per-dimension levels, each at least 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(levels: Vec<u32>) -> Result<Self, MultiIndexError> {
        if levels.is_empty() {
            return Err(MultiIndexError::ZeroDimension);
        }
        if let Some(position) = levels.iter().position(|&l| l == 0) {
            return Err(MultiIndexError::ZeroLevel { position, value: 0 });
        }
        Ok(Self(levels))
    }

    /// The all-ones index of dimension `dim`.
    pub fn ones(dim: usize) -> Self {
        Self(vec![1; dim])
    }

    pub fn levels(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `Σ (i_n - 1)`
    pub fn excess_sum(&self) -> u32 {
        self.0.iter().map(|&l| l - 1).sum()
    }

    /// `max (i_n - 1)`
    pub fn excess_max(&self) -> u32 {
        self.0.iter().map(|&l| l - 1).max().unwrap_or(0)
    }

    /// `i - e_n`, or `None` when `i_n == 1`.
    pub fn backward(&self, n: usize) -> Option<Self> {
        if self.0[n] <= 1 {
            return None;
        }
        let mut levels = self.0.clone();
        levels[n] -= 1;
        Some(Self(levels))
    }

    /// `i + j` for a binary offset `j` encoded as a bit mask over the dimensions.
    fn offset_by_mask(&self, mask: u64) -> Self {
        let levels = self
            .0
            .iter()
            .enumerate()
            .map(|(n, &l)| l + ((mask >> n) & 1) as u32)
            .collect();
        Self(levels)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (n, l) in self.0.iter().enumerate() {
            if n > 0 {
                f.write_str(",")?;
            }
            write!(f, "{l}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexSetKind {
    /// `{ i : Σ (i_n - 1) <= w }`
    Sum,
    /// `{ i : max (i_n - 1) <= w }`
    Max,
    /// Arbitrary user-supplied downward-closed set.
    Explicit,
}

/// A downward-closed set of multi-indices in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndexSet {
    kind: IndexSetKind,
    w: u32,
    dim: usize,
    indices: Vec<MultiIndex>,
}

impl MultiIndexSet {
    /// Enumerates the `Sum` or `Max` set of dimension `dim` and level budget `w`.
    /// Explicit sets come from [`MultiIndexSet::from_indices`].
    pub fn generate(kind: IndexSetKind, dim: usize, w: u32) -> Result<Self, MultiIndexError> {
        if dim == 0 {
            return Err(MultiIndexError::ZeroDimension);
        }
        if kind == IndexSetKind::Explicit {
            return Err(MultiIndexError::ExplicitKind);
        }
        let mut indices = Vec::new();
        let mut current = vec![1u32; dim];
        // Odometer over the box [1, w+1]^dim; both defining sets live inside it.
        loop {
            let excess = current.iter().map(|&l| l - 1);
            let keep = match kind {
                IndexSetKind::Sum => excess.sum::<u32>() <= w,
                IndexSetKind::Max | IndexSetKind::Explicit => excess.max().unwrap_or(0) <= w,
            };
            if keep {
                indices.push(MultiIndex(current.clone()));
            }
            // advance, last component fastest => lexicographic order
            let mut n = dim;
            loop {
                if n == 0 {
                    return Ok(Self {
                        kind,
                        w,
                        dim,
                        indices,
                    });
                }
                n -= 1;
                if current[n] <= w {
                    current[n] += 1;
                    if kind == IndexSetKind::Sum {
                        let s: u32 = current.iter().map(|&l| l - 1).sum();
                        if s > w {
                            current[n] = 1;
                            continue;
                        }
                    }
                    break;
                }
                current[n] = 1;
            }
        }
    }

    /// Builds an explicit set, rejecting input that is not downward-closed.
    pub fn from_indices(dim: usize, indices: Vec<MultiIndex>) -> Result<Self, MultiIndexError> {
        if dim == 0 {
            return Err(MultiIndexError::ZeroDimension);
        }
        if indices.is_empty() {
            return Err(MultiIndexError::Empty);
        }
        for index in &indices {
            if index.dim() != dim {
                return Err(MultiIndexError::LengthMismatch {
                    index: index.clone(),
                    expected: dim,
                    got: index.dim(),
                });
            }
        }
        let sorted: BTreeSet<MultiIndex> = indices.into_iter().collect();
        let indices: Vec<MultiIndex> = sorted.into_iter().collect();
        let w = indices.iter().map(MultiIndex::excess_sum).max().unwrap_or(0);
        let set = Self {
            kind: IndexSetKind::Explicit,
            w,
            dim,
            indices,
        };
        set.check_downward_closed()?;
        Ok(set)
    }

    pub fn kind(&self) -> IndexSetKind {
        self.kind
    }

    /// Level budget. For explicit sets this is the largest `Σ (i_n - 1)` in the set.
    pub fn w(&self) -> u32 {
        self.w
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn contains(&self, index: &MultiIndex) -> bool {
        self.indices.binary_search(index).is_ok()
    }

    /// Largest level used in each dimension.
    pub fn max_levels(&self) -> Vec<u32> {
        let mut out = vec![0u32; self.dim];
        for index in &self.indices {
            for (m, &l) in out.iter_mut().zip(index.levels()) {
                *m = (*m).max(l);
            }
        }
        out
    }

    pub fn is_downward_closed(&self) -> bool {
        self.check_downward_closed().is_ok()
    }

    fn check_downward_closed(&self) -> Result<(), MultiIndexError> {
        for index in &self.indices {
            for n in 0..self.dim {
                if let Some(prev) = index.backward(n) {
                    if !self.contains(&prev) {
                        return Err(MultiIndexError::NotDownwardClosed {
                            index: index.clone(),
                            missing: prev,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Combination-technique coefficients `c_i = Σ_{j ∈ {0,1}^N, i+j ∈ I} (-1)^{|j|}`.
    pub fn combination_coefficients(&self) -> Result<CombinationCoefficients, MultiIndexError> {
        self.check_downward_closed()?;
        assert!(self.dim < 64, "dimension too large for binary offset enumeration");
        let coefficients = self
            .indices
            .iter()
            .map(|index| {
                (0..(1u64 << self.dim))
                    .filter(|&mask| self.contains(&index.offset_by_mask(mask)))
                    .map(|mask| if mask.count_ones() % 2 == 0 { 1 } else { -1 })
                    .sum()
            })
            .collect();
        Ok(CombinationCoefficients {
            indices: self.indices.clone(),
            coefficients,
        })
    }
}

/// Backward-neighbour check on an arbitrary collection of indices.
///
/// Returns `false` for an empty collection.
pub fn is_downward_closed(indices: &[MultiIndex]) -> bool {
    if indices.is_empty() {
        return false;
    }
    let members: BTreeSet<&MultiIndex> = indices.iter().collect();
    indices.iter().all(|index| {
        (0..index.dim()).all(|n| match index.backward(n) {
            Some(prev) => members.contains(&prev),
            None => true,
        })
    })
}

/// Coefficients parallel to the set's lexicographic index order. Zeros are kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CombinationCoefficients {
    indices: Vec<MultiIndex>,
    coefficients: Vec<i64>,
}

impl CombinationCoefficients {
    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn values(&self) -> &[i64] {
        &self.coefficients
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, i64)> + '_ {
        self.indices.iter().zip(self.coefficients.iter().copied())
    }

    pub fn nonzero(&self) -> impl Iterator<Item = (&MultiIndex, i64)> + '_ {
        self.iter().filter(|(_, c)| *c != 0)
    }

    pub fn get(&self, index: &MultiIndex) -> Option<i64> {
        self.indices
            .binary_search(index)
            .ok()
            .map(|k| self.coefficients[k])
    }

    pub fn sum(&self) -> i64 {
        self.coefficients.iter().sum()
    }
}
