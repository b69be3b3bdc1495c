//! MAP search, likelihood, Laplace covariance and posterior classification.

use sguq_core::inversion::{
    build_posterior, find_map, laplace_covariance, log_likelihood, nelder_mead, profile_likelihood,
    sigma_map, synthesize_from_outputs, FiniteDifferenceSteps, Identifiability, InverseProblem,
    InversionError, MapOptions, Measurements, NelderMeadOptions, PosteriorOptions, SurrogatePredictor,
};
use sguq_core::models::{builtin, Model};
use sguq_core::multi_index::{IndexSetKind, MultiIndexSet};
use sguq_core::surrogate::{Distribution, ParameterSpace, SparseGrid, Surrogate};

const A: [[f64; 2]; 4] = [[1.0, 2.0], [0.5, -1.0], [3.0, 0.25], [-0.7, 0.4]];

fn linear(v: &[f64]) -> Vec<f64> {
    A.iter().map(|r| r[0] * v[0] + r[1] * v[1]).collect()
}

fn measurements(values: Vec<f64>, noise_std: f64) -> Measurements {
    Measurements {
        location_ids: (0..values.len()).collect(),
        values,
        noise_std,
        seed: None,
        target: None,
    }
}

/// `(AᵀA)⁻¹` for the 4 × 2 matrix above.
fn ata_inverse() -> [[f64; 2]; 2] {
    let mut m = [[0.0; 2]; 2];
    for r in &A {
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] += r[i] * r[j];
            }
        }
    }
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]
}

fn beam_surrogate() -> Surrogate {
    let model = builtin("beam_proxy").unwrap();
    let space = ParameterSpace::uniform(&[("T_A", 1130.0, 1450.0), ("log_h_p", -5.0, 0.0)]).unwrap();
    let grid = SparseGrid::new(space, MultiIndexSet::generate(IndexSetKind::Sum, 2, 3).unwrap()).unwrap();
    let rows = model.evaluate_batch(grid.points()).unwrap();
    Surrogate::from_point_rows(grid, model.output_names().to_vec(), &rows).unwrap()
}

const BEAM_BOX: [(f64, f64); 2] = [(1130.0, 1450.0), (-5.0, 0.0)];
const DISPLACEMENTS: [usize; 9] = [0, 1, 2, 3, 4, 5, 6, 7, 8];

#[test]
fn least_squares_and_likelihood_arithmetic() {
    let data = measurements(vec![0.1, -0.2], 1.0);
    let p = InverseProblem::new(|_: &[f64]| vec![0.0, 0.0], &data, vec![(0.0, 1.0)]).unwrap();
    assert!((p.least_squares(&[0.5]).unwrap() - 0.05).abs() < 1e-15);
    let expected = -0.5 * (2.0 * std::f64::consts::PI).ln();
    assert!((log_likelihood(0.0, 1, 1.0) - expected).abs() < 1e-15);
    assert!((sigma_map(0.09, 9) - 0.01).abs() < 1e-15);
    assert!(matches!(
        InverseProblem::new(|_: &[f64]| vec![0.0], &measurements(vec![0.0], 0.0), vec![(0.0, 1.0)]),
        Err(InversionError::NonPositiveNoise(_))
    ));
}

#[test]
fn convex_quadratic_has_one_cluster_at_the_minimum() {
    let v_true = [0.3, -0.4];
    let data = measurements(linear(&v_true), 0.1);
    let p = InverseProblem::new(linear, &data, vec![(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
    let map = find_map(&p, &MapOptions { n_starts: 16, seed: 4, ..MapOptions::default() }).unwrap();
    assert_eq!(map.clusters.len(), 1, "{:?}", map.clusters);
    assert_eq!(map.clusters[0].members.len(), 16);
    for (x, t) in map.v_map.iter().zip(v_true) {
        assert!((x - t).abs() < 1e-6, "{x} vs {t}");
    }
    assert!(matches!(
        find_map(&p, &MapOptions { n_starts: 2, ..MapOptions::default() }),
        Err(InversionError::TooFewStarts { .. })
    ));
}

#[test]
fn least_squares_and_likelihood_share_their_optimizer() {
    let data = measurements(vec![0.5, 0.1, 1.2, -0.3], 0.2);
    let p = InverseProblem::new(linear, &data, vec![(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
    let options = NelderMeadOptions::default();
    for start in [[0.0, 0.0], [0.9, -0.9], [-0.5, 0.7]] {
        let by_ls = nelder_mead(|v: &[f64]| p.least_squares(v), &start, &options).unwrap();
        let by_ll = nelder_mead(|v: &[f64]| p.log_likelihood(v).map(|l| -l), &start, &options).unwrap();
        for (a, b) in by_ls.x.iter().zip(&by_ll.x) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }
}

#[test]
fn normalized_likelihood_matches_the_gaussian_posterior() {
    // linear model, uniform prior much wider than the posterior
    let v_true = [0.2, -0.1];
    let sigma = 0.05;
    let data = measurements(linear(&v_true).iter().zip([0.03, -0.02, 0.01, 0.04]).map(|(u, e)| u + e).collect(), sigma);
    let p = InverseProblem::new(linear, &data, vec![(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
    // least-squares solution (AᵀA)⁻¹ Aᵀ d
    let inv = ata_inverse();
    let mut atd = [0.0; 2];
    for (r, d) in A.iter().zip(&data.values) {
        atd[0] += r[0] * d;
        atd[1] += r[1] * d;
    }
    let mean = [inv[0][0] * atd[0] + inv[0][1] * atd[1], inv[1][0] * atd[0] + inv[1][1] * atd[1]];
    let s2 = sigma * sigma;

    let n = 801;
    let h = 2.0 / (n - 1) as f64;
    let mut mass = 0.0;
    let mut m1 = [0.0; 2];
    let mut m2 = [[0.0; 2]; 2];
    let ll_ref = p.log_likelihood(&mean).unwrap();
    for i in 0..n {
        for j in 0..n {
            let v = [-1.0 + h * i as f64, -1.0 + h * j as f64];
            let w = (p.log_likelihood(&v).unwrap() - ll_ref).exp();
            mass += w;
            for a in 0..2 {
                m1[a] += w * v[a];
                for b in 0..2 {
                    m2[a][b] += w * v[a] * v[b];
                }
            }
        }
    }
    for a in 0..2 {
        let mu = m1[a] / mass;
        assert!((mu - mean[a]).abs() < 1e-6, "mean {a}: {mu} vs {}", mean[a]);
        for b in 0..2 {
            let cov = m2[a][b] / mass - (m1[a] / mass) * (m1[b] / mass);
            let exact = s2 * inv[a][b];
            assert!((cov - exact).abs() < 1e-3 * s2 * inv[a][a], "cov {a}{b}: {cov} vs {exact}");
        }
    }
}

#[test]
fn linear_gaussian_laplace_covariance() {
    let v_true = [0.3, -0.4];
    let data = measurements(linear(&v_true), 0.1);
    let p = InverseProblem::new(linear, &data, vec![(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
    let s2 = 0.01;
    let l = laplace_covariance(&p, &v_true, s2, &FiniteDifferenceSteps::default()).unwrap();
    let inv = ata_inverse();
    for r in 0..2 {
        for c in 0..2 {
            let exact = s2 * inv[r][c];
            assert!((l.covariance[r][c] - exact).abs() <= 1e-6 * exact.abs().max(s2 * inv[0][0]), "{r}{c}");
        }
    }
    for row in &l.hessian_term {
        for x in row {
            assert!(x.abs() < 1e-6, "linear model has no curvature term: {x}");
        }
    }
}

#[test]
fn jacobian_agrees_with_wide_secants() {
    let s = beam_surrogate();
    let target = s.evaluate_outputs(&DISPLACEMENTS, &[1339.8, -3.75]).unwrap();
    let data = Measurements { location_ids: DISPLACEMENTS.to_vec(), ..measurements(target, 0.01) };
    let predictor = SurrogatePredictor { surrogate: &s, locations: &DISPLACEMENTS };
    let p = InverseProblem::new(predictor, &data, BEAM_BOX.to_vec()).unwrap();
    let v = [1339.8, -3.75];
    let l = laplace_covariance(&p, &v, 1e-4, &FiniteDifferenceSteps::default()).unwrap();
    for (n, (lo, hi)) in BEAM_BOX.iter().enumerate() {
        let h = 1e-3 * (hi - lo);
        let mut up = v;
        let mut down = v;
        up[n] += h;
        down[n] -= h;
        let fu = s.evaluate_outputs(&DISPLACEMENTS, &up).unwrap();
        let fd = s.evaluate_outputs(&DISPLACEMENTS, &down).unwrap();
        for k in 0..DISPLACEMENTS.len() {
            let secant = (fu[k] - fd[k]) / (2.0 * h);
            let got = l.jacobian[k][n];
            assert!((got - secant).abs() <= 1e-4 * secant.abs().max(1e-8), "k={k} n={n}: {got} vs {secant}");
        }
    }
}

#[test]
fn noiseless_data_at_a_grid_point_is_recovered() {
    let s = beam_surrogate();
    let point = s
        .grid()
        .points()
        .iter()
        .filter(|p| p[0] == 1290.0)
        .min_by(|a, b| (a[1] + 1.0).abs().total_cmp(&(b[1] + 1.0).abs()))
        .unwrap()
        .clone();
    let outputs = s.evaluate(&point).unwrap();
    let data = Measurements {
        location_ids: DISPLACEMENTS.to_vec(),
        ..measurements(DISPLACEMENTS.iter().map(|&k| outputs[k]).collect(), 1e-12)
    };
    let predictor = SurrogatePredictor { surrogate: &s, locations: &DISPLACEMENTS };
    let p = InverseProblem::new(predictor, &data, BEAM_BOX.to_vec()).unwrap();
    let map = find_map(&p, &MapOptions { n_starts: 16, seed: 1, ..MapOptions::default() }).unwrap();
    for n in 0..2 {
        let (a, b) = BEAM_BOX[n];
        assert!((map.v_map[n] - point[n]).abs() / (b - a) < 1e-4, "dim {n}: {:?} vs {point:?}", map.v_map);
    }
}

#[test]
fn synthetic_noise_statistics() {
    let clean = [1.0, -2.0, 0.5];
    let sigma = 0.01;
    let mut inside = 0;
    let mut total = 0;
    for seed in 0..1000 {
        let m = synthesize_from_outputs(&clean, &[0.0], &[0, 1, 2], sigma, seed).unwrap();
        for (v, c) in m.values.iter().zip(clean) {
            total += 1;
            if (v - c).abs() <= 3.0 * sigma {
                inside += 1;
            }
        }
    }
    assert!(inside as f64 >= 0.99 * total as f64, "{inside}/{total}");
    let again = synthesize_from_outputs(&clean, &[0.0], &[0, 1, 2], sigma, 17).unwrap();
    assert_eq!(again, synthesize_from_outputs(&clean, &[0.0], &[0, 1, 2], sigma, 17).unwrap());
}

#[test]
fn least_squares_at_the_truth_averages_k_sigma_squared() {
    let s = beam_surrogate();
    let target = [1339.8, -3.75];
    let outputs = s.evaluate(&target).unwrap();
    let predictor = SurrogatePredictor { surrogate: &s, locations: &DISPLACEMENTS };
    let sigma = 0.01;
    let mut sum = 0.0;
    for seed in 0..200 {
        let data = synthesize_from_outputs(&outputs, &target, &DISPLACEMENTS, sigma, seed).unwrap();
        let p = InverseProblem::new(predictor, &data, BEAM_BOX.to_vec()).unwrap();
        sum += p.least_squares(&target).unwrap();
    }
    let expected = DISPLACEMENTS.len() as f64 * sigma * sigma;
    let mean = sum / 200.0;
    assert!((mean - expected).abs() < 0.2 * expected, "{mean} vs {expected}");
}

#[test]
fn profiles_separate_identifiable_and_flat_dimensions() {
    let s = beam_surrogate();
    let target = [1339.8, -3.75];
    let outputs = s.evaluate(&target).unwrap();
    let data = synthesize_from_outputs(&outputs, &target, &DISPLACEMENTS, 0.01, 1).unwrap();
    let predictor = SurrogatePredictor { surrogate: &s, locations: &DISPLACEMENTS };
    let p = InverseProblem::new(predictor, &data, BEAM_BOX.to_vec()).unwrap();
    let map = find_map(&p, &MapOptions { n_starts: 16, seed: 1, ..MapOptions::default() }).unwrap();
    let s2 = sigma_map(map.ls_min, data.len());
    let temperature = profile_likelihood(&p, 0, &map.v_map, 201).unwrap();
    let film = profile_likelihood(&p, 1, &map.v_map, 201).unwrap();

    // temperature: a single basin rising well past the confidence threshold at both ends
    let argmin = (0..201).min_by(|&a, &b| temperature.ls[a].total_cmp(&temperature.ls[b])).unwrap();
    assert!(argmin > 0 && argmin < 200);
    assert!(temperature.ls[0] - map.ls_min > 10.0 * 3.84 * s2);
    assert!(temperature.ls[200] - map.ls_min > 10.0 * 3.84 * s2, "{} {} {s2} {:?}", temperature.ls[200], map.ls_min, map.v_map);
    for i in 1..argmin {
        assert!(temperature.ls[i] <= temperature.ls[i - 1] + 1e-12);
    }
    for i in argmin + 1..201 {
        assert!(temperature.ls[i] + 1e-12 >= temperature.ls[i - 1]);
    }
    // film coefficient: flat below the saturation knee
    let flat: Vec<f64> = film.x.iter().zip(&film.ls).filter(|(x, _)| **x <= -3.0).map(|(_, l)| *l).collect();
    let spread = flat.iter().copied().fold(f64::NEG_INFINITY, f64::max) - flat.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(spread < 3.84 * s2, "{spread} vs {}", 3.84 * s2);

    let laplace = laplace_covariance(&p, &map.v_map, s2, &FiniteDifferenceSteps::default());
    if let Ok(laplace) = laplace {
        let names = vec!["T_A".to_string(), "log_h_p".to_string()];
        let spec = build_posterior(&names, &map, s2, &laplace, &[temperature, film], &BEAM_BOX, &PosteriorOptions::default()).unwrap();
        assert_eq!(spec.marginals[0].classification, Identifiability::Identifiable);
        assert_eq!(spec.marginals[1].classification, Identifiability::WeaklyIdentifiable);
        match spec.marginals[0].distribution {
            Distribution::Gaussian { mean, std } => {
                assert_eq!(mean, map.v_map[0]);
                // narrower than the prior standard deviation
                assert!(std < 320.0 / 12f64.sqrt());
            }
            other => panic!("{other:?}"),
        }
        match spec.marginals[1].distribution {
            Distribution::Uniform { a, b } => assert!(a == -5.0 && b > -3.0 && b < 0.0, "[{a}, {b}]"),
            other => panic!("{other:?}"),
        }
    }
}
