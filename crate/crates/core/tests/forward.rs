//! Posterior sampling, propagation and kernel density estimates.

use sguq_core::forward::{
    estimate_density, propagate, propagate_spec, sample_posterior, uncertainty_bands, ForwardError,
};
use sguq_core::inversion::{Identifiability, Marginal, PosteriorSpec};
use sguq_core::multi_index::{IndexSetKind, MultiIndexSet};
use sguq_core::surrogate::{Distribution, ParameterSpace, SparseGrid, Surrogate};

fn marginal(name: &str, distribution: Distribution) -> Marginal {
    Marginal {
        name: name.into(),
        distribution,
        classification: match distribution {
            Distribution::Gaussian { .. } => Identifiability::Identifiable,
            Distribution::Uniform { .. } => Identifiability::WeaklyIdentifiable,
        },
        confidence_set: (0.0, 0.0),
        confidence_fraction: 0.0,
    }
}

fn spec(marginals: Vec<Marginal>, bounds: Vec<(f64, f64)>) -> PosteriorSpec {
    PosteriorSpec {
        v_map: bounds.iter().map(|(a, b)| 0.5 * (a + b)).collect(),
        marginals,
        bounds,
        sigma2_map: 0.0,
        covariance: Vec::new(),
        covariance_dims: Vec::new(),
        independence_assumed: true,
    }
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

#[test]
fn truncated_gaussian_passes_a_kolmogorov_smirnov_test() {
    let (lo, hi) = (-0.5, 2.0);
    let s = spec(vec![marginal("x", Distribution::Gaussian { mean: 0.0, std: 1.0 })], vec![(lo, hi)]);
    let n = 20_000;
    let mut x: Vec<f64> = sample_posterior(&s, n, 3).unwrap().into_iter().map(|v| v[0]).collect();
    assert!(x.iter().all(|&v| (lo..=hi).contains(&v)));
    x.sort_by(f64::total_cmp);
    let mass = normal_cdf(hi) - normal_cdf(lo);
    let cdf = |v: f64| (normal_cdf(v) - normal_cdf(lo)) / mass;
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
        })
        .fold(0.0, f64::max);
    // 5% critical value
    assert!(d < 1.36 / (n as f64).sqrt(), "KS statistic {d}");
}

#[test]
fn pathological_truncation_is_rejected() {
    let s = spec(vec![marginal("x", Distribution::Gaussian { mean: 10.0, std: 1.0 })], vec![(-1.0, 1.0)]);
    assert!(matches!(sample_posterior(&s, 10, 1), Err(ForwardError::LowAcceptance { dim: 0, .. })));
    assert!(matches!(sample_posterior(&s, 0, 1), Err(ForwardError::NoSamples)));
}

#[test]
fn sampling_is_reproducible() {
    let s = spec(
        vec![
            marginal("a", Distribution::Gaussian { mean: 1341.0, std: 13.0 }),
            marginal("b", Distribution::Uniform { a: -5.0, b: -1.5 }),
        ],
        vec![(1130.0, 1450.0), (-5.0, 0.0)],
    );
    assert_eq!(sample_posterior(&s, 500, 8).unwrap(), sample_posterior(&s, 500, 8).unwrap());
    assert_ne!(sample_posterior(&s, 500, 8).unwrap(), sample_posterior(&s, 500, 9).unwrap());
}

#[test]
fn standard_normal_density_estimate() {
    let s = spec(vec![marginal("x", Distribution::Gaussian { mean: 0.0, std: 1.0 })], vec![(-50.0, 50.0)]);
    let x: Vec<f64> = sample_posterior(&s, 10_000, 1).unwrap().into_iter().map(|v| v[0]).collect();
    let d = estimate_density(&x, 512).unwrap();
    let z95 = 1.6448536269514722;
    assert!((d.q05 + z95).abs() < 0.03, "q05 {}", d.q05);
    assert!((d.q95 - z95).abs() < 0.03, "q95 {}", d.q95);
    assert!((d.integral() - 1.0).abs() < 1e-3, "{}", d.integral());
    assert!(d.mode.abs() < 0.1 + d.resolution(), "mode {}", d.mode);
    let peak = d.density.iter().copied().fold(0.0, f64::max);
    let exact = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    assert!((peak - exact).abs() < 0.03, "{peak} vs {exact}");
}

#[test]
fn uniform_density_estimate() {
    let s = spec(vec![marginal("x", Distribution::Uniform { a: 0.0, b: 1.0 })], vec![(0.0, 1.0)]);
    let x: Vec<f64> = sample_posterior(&s, 10_000, 2).unwrap().into_iter().map(|v| v[0]).collect();
    let d = estimate_density(&x, 512).unwrap();
    assert!((d.q05 - 0.05).abs() < 0.02 && (d.q95 - 0.95).abs() < 0.02, "{} {}", d.q05, d.q95);
    assert!((d.integral() - 1.0).abs() < 1e-3);
}

#[test]
fn symmetric_density_has_its_mode_near_the_median() {
    let s = spec(vec![marginal("x", Distribution::Gaussian { mean: 3.0, std: 0.5 })], vec![(-10.0, 10.0)]);
    let x: Vec<f64> = sample_posterior(&s, 50_000, 5).unwrap().into_iter().map(|v| v[0]).collect();
    let d = estimate_density(&x, 512).unwrap();
    let mut sorted = x.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    assert!((d.mode - median).abs() < 0.05 + d.resolution(), "{} vs {median}", d.mode);
}

#[test]
fn constant_values_are_degenerate() {
    let d = estimate_density(&[2.5; 200], 64).unwrap();
    assert!(d.degenerate);
    assert_eq!((d.mode, d.q05, d.q95), (2.5, 2.5, 2.5));
    assert!(matches!(estimate_density(&[1.0; 10], 64), Err(ForwardError::TooFewValues { .. })));
}

fn linear_surrogate() -> Surrogate {
    let space = ParameterSpace::uniform(&[("a", 0.0, 1.0), ("b", -1.0, 3.0)]).unwrap();
    let grid = SparseGrid::new(space, MultiIndexSet::generate(IndexSetKind::Sum, 2, 1).unwrap()).unwrap();
    let rows: Vec<Vec<f64>> = grid.points().iter().map(|v| vec![2.0 * v[0] + 3.0 * v[1], v[0] - v[1]]).collect();
    Surrogate::from_point_rows(grid, vec!["y".into(), "z".into()], &rows).unwrap()
}

#[test]
fn linear_propagation_variance() {
    let sur = linear_surrogate();
    let prior = PosteriorSpec::from_prior(sur.grid().space()).unwrap();
    let samples = sample_posterior(&prior, 20_000, 4).unwrap();
    let y = &propagate(&sur, &[0], &samples).unwrap()[0];
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (y.len() - 1) as f64;
    // 4 · 1/12 + 9 · 16/12
    let exact = 4.0 / 12.0 + 9.0 * 16.0 / 12.0;
    assert!((var - exact).abs() < 0.05 * exact, "{var} vs {exact}");
    assert!((mean - (1.0 + 3.0)).abs() < 0.05);
    assert!(matches!(propagate(&sur, &[2], &samples), Err(ForwardError::UnknownOutput { .. })));
}

#[test]
fn identical_prior_and_posterior_give_identical_bands() {
    let sur = linear_surrogate();
    let prior = PosteriorSpec::from_prior(sur.grid().space()).unwrap();
    let bands = uncertainty_bands(&prior, &sur, &prior, &sur, &[0, 1], 10_000, 1, 256).unwrap();
    for b in &bands {
        assert_eq!(b.prior, b.posterior);
    }
    // an independent seed lands within a few percent
    let other = propagate_spec(&prior, &sur, &[0, 1], 10_000, 2, 256).unwrap();
    for (b, o) in bands.iter().zip(&other) {
        let rel = (b.posterior.band_width() - o.band_width()).abs() / o.band_width();
        assert!(rel < 0.03, "{}: {rel}", b.name);
    }
}

#[test]
fn narrower_posterior_narrows_the_band() {
    let sur = linear_surrogate();
    let prior = PosteriorSpec::from_prior(sur.grid().space()).unwrap();
    let posterior = spec(
        vec![
            marginal("a", Distribution::Gaussian { mean: 0.4, std: 0.05 }),
            marginal("b", Distribution::Uniform { a: 0.0, b: 1.0 }),
        ],
        vec![(0.0, 1.0), (-1.0, 3.0)],
    );
    let bands = uncertainty_bands(&prior, &sur, &posterior, &sur, &[0, 1], 10_000, 1, 256).unwrap();
    for b in &bands {
        assert!(b.posterior.band_width() < b.prior.band_width(), "{}", b.name);
    }
}
