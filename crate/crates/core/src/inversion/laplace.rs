//! Laplace covariance `σ²_MAP (JᵀJ + Σ_k M_k H_k)⁻¹` from finite differences.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{InversionError, InverseProblem, Predictor};

/// Steps as fractions of each dimension's prior range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteDifferenceSteps {
    pub jacobian: f64,
    pub hessian: f64,
}

impl Default for FiniteDifferenceSteps {
    fn default() -> Self {
        Self {
            jacobian: 1e-4,
            hessian: 1e-3,
        }
    }
}

/// Eigenvalue ratio of the range-scaled `JᵀJ` under which it counts as singular.
const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Laplace {
    /// Rows and columns follow `dims`.
    pub covariance: Vec<Vec<f64>>,
    pub dims: Vec<usize>,
    /// K × dims.len()
    pub jacobian: Vec<Vec<f64>>,
    /// `Σ_k M_k H_k`
    pub hessian_term: Vec<Vec<f64>>,
    /// The Hessian term was dropped because the full matrix was not positive definite.
    pub gauss_newton_fallback: bool,
    /// Per entry of `dims`: a boundary forced one-sided differences.
    pub one_sided: Vec<bool>,
}

/// Covariance over all dimensions.
pub fn laplace_covariance<P: Predictor>(
    problem: &InverseProblem<'_, P>,
    v_map: &[f64],
    sigma2_map: f64,
    steps: &FiniteDifferenceSteps,
) -> Result<Laplace, InversionError> {
    let dims: Vec<usize> = (0..problem.dim()).collect();
    laplace_covariance_on(problem, v_map, sigma2_map, steps, &dims)
}

/// Covariance over the listed dimensions, the others held at `v_map`.
pub fn laplace_covariance_on<P: Predictor>(
    problem: &InverseProblem<'_, P>,
    v_map: &[f64],
    sigma2_map: f64,
    steps: &FiniteDifferenceSteps,
    dims: &[usize],
) -> Result<Laplace, InversionError> {
    if v_map.len() != problem.dim() {
        return Err(InversionError::LengthMismatch {
            what: "MAP point",
            expected: problem.dim(),
            got: v_map.len(),
        });
    }
    let d = dims.len();
    let k = problem.data.len();
    let ranges = problem.ranges();
    let predict = |v: &[f64]| -> Result<Vec<f64>, InversionError> {
        let p = problem.predictor.predict(v)?;
        if p.len() != k {
            return Err(InversionError::LengthMismatch {
                what: "predictions",
                expected: k,
                got: p.len(),
            });
        }
        Ok(p)
    };
    let shifted = |base: &[f64], moves: &[(usize, f64)]| {
        let mut v = base.to_vec();
        for &(n, delta) in moves {
            v[n] += delta;
        }
        v
    };
    let center = predict(v_map)?;
    let mut one_sided = vec![false; d];

    let mut jacobian = vec![vec![0.0; d]; k];
    for (c, &n) in dims.iter().enumerate() {
        let h = steps.jacobian * ranges[n];
        let (lo, hi) = problem.bounds[n];
        let (plus, minus, span) = if v_map[n] - h >= lo && v_map[n] + h <= hi {
            (predict(&shifted(v_map, &[(n, h)]))?, predict(&shifted(v_map, &[(n, -h)]))?, 2.0 * h)
        } else if v_map[n] + h <= hi {
            one_sided[c] = true;
            (predict(&shifted(v_map, &[(n, h)]))?, center.clone(), h)
        } else {
            one_sided[c] = true;
            (center.clone(), predict(&shifted(v_map, &[(n, -h)]))?, h)
        };
        for (row, (p, m)) in jacobian.iter_mut().zip(plus.iter().zip(&minus)) {
            row[c] = (p - m) / span;
        }
    }

    // Hessian stencils are centered at the MAP point moved inward where needed.
    let hs: Vec<f64> = dims.iter().map(|&n| steps.hessian * ranges[n]).collect();
    let mut base = v_map.to_vec();
    for (c, &n) in dims.iter().enumerate() {
        let (lo, hi) = problem.bounds[n];
        let moved = base[n].clamp(lo + hs[c], hi - hs[c]);
        if moved != base[n] {
            one_sided[c] = true;
            base[n] = moved;
        }
    }
    let misfits: Vec<f64> = problem
        .data
        .values
        .iter()
        .zip(&center)
        .map(|(u, p)| u - p)
        .collect();
    let f0 = predict(&base)?;
    let mut hessian_term = vec![vec![0.0; d]; d];
    for i in 0..d {
        let (ni, hi) = (dims[i], hs[i]);
        let plus = predict(&shifted(&base, &[(ni, hi)]))?;
        let minus = predict(&shifted(&base, &[(ni, -hi)]))?;
        hessian_term[i][i] = (0..k)
            .map(|q| misfits[q] * (plus[q] - 2.0 * f0[q] + minus[q]) / (hi * hi))
            .sum();
        for j in 0..i {
            let (nj, hj) = (dims[j], hs[j]);
            let pp = predict(&shifted(&base, &[(ni, hi), (nj, hj)]))?;
            let pm = predict(&shifted(&base, &[(ni, hi), (nj, -hj)]))?;
            let mp = predict(&shifted(&base, &[(ni, -hi), (nj, hj)]))?;
            let mm = predict(&shifted(&base, &[(ni, -hi), (nj, -hj)]))?;
            let value: f64 = (0..k)
                .map(|q| misfits[q] * (pp[q] - pm[q] - mp[q] + mm[q]) / (4.0 * hi * hj))
                .sum();
            hessian_term[i][j] = value;
            hessian_term[j][i] = value;
        }
    }

    let j = DMatrix::from_fn(k, d, |r, c| jacobian[r][c]);
    let jtj = j.transpose() * &j;

    // rank check in range-normalized coordinates so units do not matter
    let scale = DMatrix::from_fn(d, d, |r, c| if r == c { ranges[dims[r]] } else { 0.0 });
    let scaled = &scale * &jtj * &scale;
    let eig = SymmetricEigen::new(scaled);
    let (mut imin, mut imax) = (0, 0);
    for i in 0..d {
        if eig.eigenvalues[i] < eig.eigenvalues[imin] {
            imin = i;
        }
        if eig.eigenvalues[i] > eig.eigenvalues[imax] {
            imax = i;
        }
    }
    let (lmin, lmax) = (eig.eigenvalues[imin], eig.eigenvalues[imax]);
    let ratio = if lmax > 0.0 { lmin / lmax } else { 0.0 };
    if !(ratio > RANK_TOLERANCE) {
        let mut null_direction = vec![0.0; problem.dim()];
        for (c, &n) in dims.iter().enumerate() {
            null_direction[n] = eig.eigenvectors[(c, imin)];
        }
        return Err(InversionError::RankDeficient {
            null_direction,
            ratio,
        });
    }

    let h = DMatrix::from_fn(d, d, |r, c| hessian_term[r][c]);
    let full = &jtj + &h;
    let full = (&full + full.transpose()) * 0.5;
    let (inverse, gauss_newton_fallback) = match full.clone().cholesky() {
        Some(chol) => (chol.inverse(), false),
        None => {
            log::warn!("JᵀJ + ΣM_kH_k is not positive definite; dropping the Hessian term");
            let gn = (&jtj + jtj.transpose()) * 0.5;
            match gn.cholesky() {
                Some(chol) => (chol.inverse(), true),
                None => {
                    return Err(InversionError::RankDeficient {
                        null_direction: vec![0.0; problem.dim()],
                        ratio,
                    })
                }
            }
        }
    };
    let cov = inverse * sigma2_map;
    let covariance = (0..d)
        .map(|r| (0..d).map(|c| 0.5 * (cov[(r, c)] + cov[(c, r)])).collect())
        .collect();
    Ok(Laplace {
        covariance,
        dims: dims.to_vec(),
        jacobian,
        hessian_term,
        gauss_newton_fallback,
        one_sided,
    })
}
