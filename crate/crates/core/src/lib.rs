//! Sparse-grid uncertainty quantification.
//!
//! The crate is `no_std` (with `alloc`). It covers multi-index sets and the
//! combination technique, nested Leja knots, sparse-grid surrogates, Sobol
//! sensitivity indices, Bayesian inversion with a Laplace/profile-likelihood
//! posterior, and forward propagation with kernel density estimates.

#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod forward;
pub mod gsa;
pub mod inversion;
pub mod knots;
pub mod models;
pub mod multi_index;
pub mod surrogate;

mod stats;

pub use rand_chacha::ChaCha8Rng;

/// The seeded generator used for every random draw in the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}
