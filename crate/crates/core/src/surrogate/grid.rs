use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::lagrange::BarycentricNodes;
use super::space::ParameterSpace;
use super::SurrogateError;
use crate::knots::{knots_for_level, level_to_knots};
use crate::multi_index::{CombinationCoefficients, MultiIndex, MultiIndexSet};

/// Visits every position of a Cartesian shape, last axis fastest.
fn for_each_position(shape: &[usize], mut visit: impl FnMut(usize, &[usize])) {
    if shape.contains(&0) {
        return;
    }
    let mut pos = vec![0usize; shape.len()];
    let mut linear = 0;
    loop {
        visit(linear, &pos);
        linear += 1;
        let mut n = shape.len();
        loop {
            if n == 0 {
                return;
            }
            n -= 1;
            pos[n] += 1;
            if pos[n] < shape[n] {
                break;
            }
            pos[n] = 0;
        }
    }
}

/// `Σ_j values[j] · Π_n basis[n][j_n]` over the Cartesian grid, last axis fastest.
fn contract(basis: &[&[f64]], mut value_at: impl FnMut(usize) -> f64) -> f64 {
    let mut total = 0.0;
    accumulate(basis, |j, w| total += w * value_at(j));
    total
}

/// Cartesian grid of one multi-index with its tensor Lagrange interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorGrid {
    index: MultiIndex,
    axes: Vec<BarycentricNodes>,
}

impl TensorGrid {
    pub fn new(space: &ParameterSpace, index: &MultiIndex) -> Result<Self, SurrogateError> {
        if index.dim() != space.dim() {
            return Err(SurrogateError::DimensionMismatch {
                expected: space.dim(),
                got: index.dim(),
            });
        }
        let axes = index
            .levels()
            .iter()
            .enumerate()
            .map(|(n, &level)| {
                let family = space.distribution(n).knot_family();
                knots_for_level(&family, level).map(|k| BarycentricNodes::new(k.points()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            index: index.clone(),
            axes,
        })
    }

    pub fn index(&self) -> &MultiIndex {
        &self.index
    }

    /// `(2 i_1 - 1) × ... × (2 i_N - 1)`
    pub fn len(&self) -> usize {
        self.axes.iter().map(BarycentricNodes::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid points in Cartesian order (last dimension fastest).
    pub fn points(&self) -> Vec<Vec<f64>> {
        let shape: Vec<usize> = self.axes.iter().map(BarycentricNodes::len).collect();
        let mut out = Vec::with_capacity(self.len());
        for_each_position(&shape, |_, pos| {
            out.push(
                pos.iter()
                    .zip(&self.axes)
                    .map(|(&j, axis)| axis.nodes()[j])
                    .collect(),
            );
        });
        out
    }

    /// Tensor Lagrange interpolant of `values` (in [`TensorGrid::points`] order) at `v`.
    pub fn interpolate(&self, values: &[f64], v: &[f64]) -> Result<f64, SurrogateError> {
        if values.len() != self.len() {
            return Err(SurrogateError::ValueCountMismatch {
                expected: self.len(),
                got: values.len(),
            });
        }
        if v.len() != self.axes.len() {
            return Err(SurrogateError::DimensionMismatch {
                expected: self.axes.len(),
                got: v.len(),
            });
        }
        let basis: Vec<Vec<f64>> = self
            .axes
            .iter()
            .zip(v)
            .map(|(axis, &x)| axis.basis(x))
            .collect();
        let refs: Vec<&[f64]> = basis.iter().map(Vec::as_slice).collect();
        Ok(contract(&refs, |j| values[j]))
    }
}

/// One tensor grid with a nonzero combination coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorComponent {
    pub index: MultiIndex,
    pub coefficient: i64,
    /// Global point id of each Cartesian point of the tensor grid.
    pub global_ids: Vec<usize>,
}

/// Union of the tensor grids with `c_i != 0`, deduplicated.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGrid {
    space: ParameterSpace,
    index_set: MultiIndexSet,
    coefficients: CombinationCoefficients,
    /// `axes[n][level - 1]`
    axes: Vec<Vec<BarycentricNodes>>,
    points: Vec<Vec<f64>>,
    components: Vec<TensorComponent>,
}

impl SparseGrid {
    pub fn new(space: ParameterSpace, index_set: MultiIndexSet) -> Result<Self, SurrogateError> {
        if index_set.dim() != space.dim() {
            return Err(SurrogateError::DimensionMismatch {
                expected: space.dim(),
                got: index_set.dim(),
            });
        }
        let coefficients = index_set.combination_coefficients()?;
        let max_levels = index_set.max_levels();

        let mut knots = Vec::with_capacity(space.dim());
        let mut axes = Vec::with_capacity(space.dim());
        for (n, &top) in max_levels.iter().enumerate() {
            let family = space.distribution(n).knot_family();
            let seq = knots_for_level(&family, top)?.into_inner();
            axes.push(
                (1..=top)
                    .map(|level| BarycentricNodes::new(&seq[..level_to_knots(level)]))
                    .collect::<Vec<_>>(),
            );
            knots.push(seq);
        }

        // Nested sequences make a point's identity its per-dimension knot position,
        // so deduplication is exact.
        let mut ids: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        let mut points = Vec::new();
        let mut components = Vec::new();
        for (index, coefficient) in coefficients.nonzero() {
            let shape: Vec<usize> = index
                .levels()
                .iter()
                .map(|&l| level_to_knots(l))
                .collect();
            let mut global_ids = Vec::with_capacity(shape.iter().product());
            for_each_position(&shape, |_, pos| {
                let next = points.len();
                let id = *ids.entry(pos.to_vec()).or_insert(next);
                if id == next {
                    points.push(pos.iter().enumerate().map(|(n, &j)| knots[n][j]).collect());
                }
                global_ids.push(id);
            });
            components.push(TensorComponent {
                index: index.clone(),
                coefficient,
                global_ids,
            });
        }

        let grid = Self {
            space,
            index_set,
            coefficients,
            axes,
            points,
            components,
        };
        grid.check_separation()?;
        Ok(grid)
    }

    /// Sweep over points sorted by their first normalized coordinate, asserting
    /// no two distinct points lie within 1e-12 (relative to each dimension's scale).
    fn check_separation(&self) -> Result<(), SurrogateError> {
        const TOL: f64 = 1e-12;
        let scales: Vec<f64> = (0..self.space.dim())
            .map(|n| self.space.distribution(n).scale())
            .collect();
        let normalized: Vec<Vec<f64>> = self
            .points
            .iter()
            .map(|p| p.iter().zip(&scales).map(|(x, s)| x / s).collect())
            .collect();
        let mut order: Vec<usize> = (0..normalized.len()).collect();
        order.sort_by(|&a, &b| normalized[a][0].total_cmp(&normalized[b][0]));
        for (k, &a) in order.iter().enumerate() {
            for &b in &order[k + 1..] {
                if normalized[b][0] - normalized[a][0] > TOL {
                    break;
                }
                let close = normalized[a]
                    .iter()
                    .zip(&normalized[b])
                    .all(|(x, y)| (x - y).abs() <= TOL);
                if close {
                    return Err(SurrogateError::NearDuplicatePoints { a, b });
                }
            }
        }
        Ok(())
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn index_set(&self) -> &MultiIndexSet {
        &self.index_set
    }

    pub fn coefficients(&self) -> &CombinationCoefficients {
        &self.coefficients
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    /// Global (deduplicated) grid points, M × N.
    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn components(&self) -> &[TensorComponent] {
        &self.components
    }

    /// Cardinal weights of every global point at `v`: the surrogate value is
    /// `Σ_m weights[m] · f(points[m])`.
    pub fn weights_at(&self, v: &[f64]) -> Result<Vec<f64>, SurrogateError> {
        if v.len() != self.dim() {
            return Err(SurrogateError::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        if !self.space.contains(v) {
            log::warn!("surrogate evaluated outside the parameter box at {v:?} (polynomial extrapolation)");
        }
        let basis: Vec<Vec<Vec<f64>>> = self
            .axes
            .iter()
            .zip(v)
            .map(|(levels, &x)| levels.iter().map(|axis| axis.basis(x)).collect())
            .collect();
        let mut weights = vec![0.0; self.points.len()];
        let mut refs: Vec<&[f64]> = Vec::with_capacity(self.dim());
        for component in &self.components {
            refs.clear();
            refs.extend(
                component
                    .index
                    .levels()
                    .iter()
                    .enumerate()
                    .map(|(n, &l)| basis[n][l as usize - 1].as_slice()),
            );
            let c = component.coefficient as f64;
            let ids = &component.global_ids;
            // contract against unit vectors by accumulating each product directly
            accumulate(&refs, |j, w| weights[ids[j]] += c * w);
        }
        Ok(weights)
    }
}

/// Calls `sink(j, Π_n basis[n][j_n])` for every Cartesian position `j`.
fn accumulate(basis: &[&[f64]], mut sink: impl FnMut(usize, f64)) {
    let dims = basis.len();
    let shape: Vec<usize> = basis.iter().map(|b| b.len()).collect();
    let mut prefix = vec![1.0; dims + 1];
    for n in 0..dims {
        prefix[n + 1] = prefix[n] * basis[n][0];
    }
    let mut pos = vec![0usize; dims];
    let mut linear = 0;
    loop {
        sink(linear, prefix[dims]);
        linear += 1;
        let mut n = dims;
        loop {
            if n == 0 {
                return;
            }
            n -= 1;
            pos[n] += 1;
            if pos[n] < shape[n] {
                break;
            }
            pos[n] = 0;
        }
        for k in n..dims {
            prefix[k + 1] = prefix[k] * basis[k][pos[k]];
        }
    }
}
