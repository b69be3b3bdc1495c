//! Nested univariate collocation points: symmetric Leja points for uniform
//! parameters and symmetric Gaussian Leja points for Gaussian parameters.
//!
//! Both families are generated greedily on a standardized frame (`[-1, 1]`
//! for uniform, the standard normal for Gaussian) and then mapped affinely.
//! Even-position points solve the (weighted) Leja argmax, odd-position points
//! mirror the preceding even one about the centre. The existing points are
//! therefore always symmetric when an argmax is taken, so the search is run
//! on the lower half only, which also breaks the `±x` tie toward the smaller
//! coordinate.

use alloc::vec::Vec;

use num_traits::Float;
use once_cell::race::OnceBox;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KnotError {
    #[error("interval [{a}, {b}] is empty or not finite")]
    EmptyInterval { a: f64, b: f64 },
    #[error("standard deviation must be positive and finite, got {0}")]
    NonPositiveStd(f64),
    #[error("at least one knot must be requested")]
    ZeroCount,
    #[error("levels start at 1")]
    ZeroLevel,
}

/// Number of knots used at a level: `m(i) = 2i - 1`.
pub fn level_to_knots(level: u32) -> usize {
    2 * level as usize - 1
}

/// Per-dimension rule producing a nested knot sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KnotFamily {
    SymmetricLeja { a: f64, b: f64 },
    SymmetricGaussianLeja { mean: f64, std: f64 },
}

impl KnotFamily {
    pub fn validate(&self) -> Result<(), KnotError> {
        match *self {
            KnotFamily::SymmetricLeja { a, b } => {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return Err(KnotError::EmptyInterval { a, b });
                }
            }
            KnotFamily::SymmetricGaussianLeja { std, mean } => {
                if !(std.is_finite() && std > 0.0 && mean.is_finite()) {
                    return Err(KnotError::NonPositiveStd(std));
                }
            }
        }
        Ok(())
    }

    /// The first `n` knots of the family's sequence.
    pub fn sequence(&self, n: usize) -> Result<KnotSequence, KnotError> {
        match *self {
            KnotFamily::SymmetricLeja { a, b } => symmetric_leja(n, a, b),
            KnotFamily::SymmetricGaussianLeja { mean, std } => {
                symmetric_gaussian_leja(n, mean, std)
            }
        }
    }
}

/// Knots in generation order (not sorted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KnotSequence(Vec<f64>);

impl KnotSequence {
    pub fn points(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Dense scan followed by bisection refinement of the best bracket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LejaSolver {
    /// Number of uniformly spaced candidates across the full search interval.
    pub candidates: usize,
    /// Refinement stops when the bracket is narrower than this fraction of the interval.
    pub relative_tolerance: f64,
}

impl Default for LejaSolver {
    fn default() -> Self {
        Self {
            candidates: 100_000,
            relative_tolerance: 1e-12,
        }
    }
}

/// Half-width of the standardized search box for Gaussian Leja points.
pub const GAUSSIAN_SEARCH_HALF_WIDTH: f64 = 20.0;

fn log_leja_objective(x: f64, points: &[f64], gaussian: bool) -> f64 {
    // log of sqrt(rho(x)) for the standard normal, up to a constant
    let weight = if gaussian { -0.25 * x * x } else { 0.0 };
    points
        .iter()
        .fold(weight, |acc, &p| acc + Float::ln((x - p).abs()))
}

fn log_leja_slope(x: f64, points: &[f64], gaussian: bool) -> f64 {
    let weight = if gaussian { -0.5 * x } else { 0.0 };
    points.iter().fold(weight, |acc, &p| acc + 1.0 / (x - p))
}

impl LejaSolver {
    /// Maximizes the log Leja objective on `[lo, hi]`.
    ///
    /// `full_width` is the width of the whole (symmetric) search interval, used
    /// for candidate spacing and the refinement tolerance.
    fn argmax(&self, lo: f64, hi: f64, full_width: f64, points: &[f64], gaussian: bool) -> f64 {
        let spacing = full_width / (self.candidates.max(2) - 1) as f64;
        let count = (((hi - lo) / spacing).ceil() as usize).max(2);
        let step = (hi - lo) / count as f64;
        let mut best_k = 0;
        let mut best_val = f64::NEG_INFINITY;
        for k in 0..=count {
            let x = lo + step * k as f64;
            let val = log_leja_objective(x, points, gaussian);
            // strict comparison keeps the smallest coordinate on ties
            if val > best_val {
                best_val = val;
                best_k = k;
            }
        }
        // Between consecutive knots the log objective is strictly concave, so
        // the maximizer in the best bracket is the root of its derivative.
        let mut left = lo + step * best_k.saturating_sub(1) as f64;
        let mut right = (lo + step * (best_k + 1) as f64).min(hi);
        // a bracket end sitting on a knot is a pole: the slope points inward
        if !points.contains(&left) && log_leja_slope(left, points, gaussian) <= 0.0 {
            return left;
        }
        if !points.contains(&right) && log_leja_slope(right, points, gaussian) >= 0.0 {
            return right;
        }
        let tol = self.relative_tolerance * full_width;
        while right - left > tol {
            let mid = 0.5 * (left + right);
            if mid <= left || mid >= right {
                break;
            }
            if log_leja_slope(mid, points, gaussian) > 0.0 {
                left = mid;
            } else {
                right = mid;
            }
        }
        0.5 * (left + right)
    }

    /// Standardized symmetric Leja points on `[-1, 1]`.
    pub fn standard_uniform(&self, n: usize) -> Vec<f64> {
        let mut points = Vec::with_capacity(n);
        self.extend_standard_uniform(&mut points, n);
        points
    }

    fn extend_standard_uniform(&self, points: &mut Vec<f64>, n: usize) {
        const SEEDS: [f64; 3] = [1.0, -1.0, 0.0];
        while points.len() < n.min(3) {
            points.push(SEEDS[points.len()]);
        }
        while points.len() < n {
            let x = self.argmax(-1.0, 0.0, 2.0, points, false);
            points.push(x);
            if points.len() < n {
                points.push(-x);
            }
        }
    }

    /// Standardized symmetric Gaussian Leja points for the standard normal.
    pub fn standard_gaussian(&self, n: usize) -> Vec<f64> {
        let mut points = Vec::with_capacity(n);
        self.extend_standard_gaussian(&mut points, n);
        points
    }

    fn extend_standard_gaussian(&self, points: &mut Vec<f64>, n: usize) {
        if n > 0 && points.is_empty() {
            points.push(0.0);
        }
        let width = 2.0 * GAUSSIAN_SEARCH_HALF_WIDTH;
        while points.len() < n {
            let x = self.argmax(-GAUSSIAN_SEARCH_HALF_WIDTH, 0.0, width, points, true);
            points.push(x);
            if points.len() < n {
                points.push(-x);
            }
        }
    }
}

// Cached standardized prefixes, doubling in length. Greedy generation is
// prefix-stable, so each tier extends the previous one.
const CACHE_TIERS: [usize; 4] = [9, 17, 33, 65];

struct StandardCache {
    tiers: [OnceBox<Vec<f64>>; 4],
    gaussian: bool,
}

impl StandardCache {
    const fn new(gaussian: bool) -> Self {
        Self {
            tiers: [OnceBox::new(), OnceBox::new(), OnceBox::new(), OnceBox::new()],
            gaussian,
        }
    }

    fn tier(&self, t: usize) -> &Vec<f64> {
        self.tiers[t].get_or_init(|| {
            let mut points = if t == 0 {
                Vec::new()
            } else {
                self.tier(t - 1).clone()
            };
            let solver = LejaSolver::default();
            if self.gaussian {
                solver.extend_standard_gaussian(&mut points, CACHE_TIERS[t]);
            } else {
                solver.extend_standard_uniform(&mut points, CACHE_TIERS[t]);
            }
            alloc::boxed::Box::new(points)
        })
    }

    fn prefix(&self, n: usize) -> Vec<f64> {
        match CACHE_TIERS.iter().position(|&len| len >= n) {
            Some(t) => self.tier(t)[..n].to_vec(),
            None => {
                let mut points = self.tier(CACHE_TIERS.len() - 1).clone();
                let solver = LejaSolver::default();
                if self.gaussian {
                    solver.extend_standard_gaussian(&mut points, n);
                } else {
                    solver.extend_standard_uniform(&mut points, n);
                }
                points
            }
        }
    }
}

static UNIFORM_CACHE: StandardCache = StandardCache::new(false);
static GAUSSIAN_CACHE: StandardCache = StandardCache::new(true);

/// First `n` symmetric Leja points on `[a, b]`: `b, a, (a+b)/2`, then mirrored pairs.
pub fn symmetric_leja(n: usize, a: f64, b: f64) -> Result<KnotSequence, KnotError> {
    if n == 0 {
        return Err(KnotError::ZeroCount);
    }
    KnotFamily::SymmetricLeja { a, b }.validate()?;
    Ok(map_uniform(&UNIFORM_CACHE.prefix(n), a, b))
}

/// As [`symmetric_leja`] with a caller-chosen solver (uncached).
pub fn symmetric_leja_with(
    solver: &LejaSolver,
    n: usize,
    a: f64,
    b: f64,
) -> Result<KnotSequence, KnotError> {
    if n == 0 {
        return Err(KnotError::ZeroCount);
    }
    KnotFamily::SymmetricLeja { a, b }.validate()?;
    Ok(map_uniform(&solver.standard_uniform(n), a, b))
}

fn map_uniform(standard: &[f64], a: f64, b: f64) -> KnotSequence {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut out = Vec::with_capacity(standard.len());
    for (k, &t) in standard.iter().enumerate() {
        let x = match k {
            0 => b,
            1 => a,
            2 => mid,
            // odd position (1-based) >= 5 mirrors the previous point
            _ if k % 2 == 0 => mid - (out[k - 1] - mid),
            _ => mid + half * t,
        };
        out.push(x);
    }
    KnotSequence(out)
}

/// First `n` symmetric Gaussian Leja points for `N(mean, std²)`.
pub fn symmetric_gaussian_leja(n: usize, mean: f64, std: f64) -> Result<KnotSequence, KnotError> {
    if n == 0 {
        return Err(KnotError::ZeroCount);
    }
    KnotFamily::SymmetricGaussianLeja { mean, std }.validate()?;
    Ok(map_gaussian(&GAUSSIAN_CACHE.prefix(n), mean, std))
}

/// As [`symmetric_gaussian_leja`] with a caller-chosen solver (uncached).
pub fn symmetric_gaussian_leja_with(
    solver: &LejaSolver,
    n: usize,
    mean: f64,
    std: f64,
) -> Result<KnotSequence, KnotError> {
    if n == 0 {
        return Err(KnotError::ZeroCount);
    }
    KnotFamily::SymmetricGaussianLeja { mean, std }.validate()?;
    Ok(map_gaussian(&solver.standard_gaussian(n), mean, std))
}

fn map_gaussian(standard: &[f64], mean: f64, std: f64) -> KnotSequence {
    KnotSequence(standard.iter().map(|&x| mean + std * x).collect())
}

/// Knots of a family at a level: the first `m(level) = 2·level − 1` points.
pub fn knots_for_level(family: &KnotFamily, level: u32) -> Result<KnotSequence, KnotError> {
    if level == 0 {
        return Err(KnotError::ZeroLevel);
    }
    family.sequence(level_to_knots(level))
}
