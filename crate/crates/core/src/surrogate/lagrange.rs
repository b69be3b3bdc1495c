//! Univariate Lagrange bases in barycentric (second) form.

use alloc::vec;
use alloc::vec::Vec;

/// Nodes of one univariate interpolant together with their barycentric weights.
#[derive(Debug, Clone, PartialEq)]
pub struct BarycentricNodes {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl BarycentricNodes {
    pub fn new(nodes: &[f64]) -> Self {
        let n = nodes.len();
        let (lo, hi) = nodes
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        // rescaling all weights by a common factor leaves the basis unchanged
        let scale = if n > 1 { 0.5 * (hi - lo) } else { 1.0 };
        let weights = (0..n)
            .map(|j| {
                let prod: f64 = (0..n)
                    .filter(|&k| k != j)
                    .map(|k| (nodes[j] - nodes[k]) / scale)
                    .product();
                1.0 / prod
            })
            .collect();
        Self {
            nodes: nodes.to_vec(),
            weights,
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Values of all Lagrange basis polynomials at `x`, written into `out`.
    pub fn basis_into(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.nodes.len());
        if let Some(hit) = self.nodes.iter().position(|&node| node == x) {
            out.iter_mut().for_each(|o| *o = 0.0);
            out[hit] = 1.0;
            return;
        }
        let mut denom = 0.0;
        for ((o, &node), &w) in out.iter_mut().zip(&self.nodes).zip(&self.weights) {
            let t = w / (x - node);
            *o = t;
            denom += t;
        }
        out.iter_mut().for_each(|o| *o /= denom);
    }

    pub fn basis(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.nodes.len()];
        self.basis_into(x, &mut out);
        out
    }
}
