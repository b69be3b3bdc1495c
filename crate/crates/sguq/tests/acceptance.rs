//! Acceptance checks for the whole toolkit, one PASS/FAIL line per criterion.
//!
//! Runs with `cargo test -p sguq --test acceptance`. Expected values come from
//! oracles written here (brute-force Leja search, quadrature Sobol indices,
//! closed-form linear-Gaussian covariance), not from the library.

#![allow(clippy::type_complexity, clippy::needless_range_loop)]

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use sguq::config::LoadedConfig;
use sguq::evaluation::open_model;
use sguq::formats::parse_band_csv;
use sguq::run::{execute, Command, Manifest, RunOptions};
use sguq::stages::{invert, run_gsa, run_invert, ForwardSummary, BANDS_FILE, SUMMARY_FILE};
use sguq_core::forward::{estimate_density, sample_posterior};
use sguq_core::inversion::{
    laplace_covariance, synthesize_from_outputs, FiniteDifferenceSteps, Identifiability, InverseProblem,
    Marginal, Measurements, PosteriorSpec,
};
use sguq_core::knots::{knots_for_level, symmetric_gaussian_leja, symmetric_leja, KnotFamily};
use sguq_core::models::{builtin, ishigami, Model};
use sguq_core::multi_index::{IndexSetKind, MultiIndex, MultiIndexSet};
use sguq_core::surrogate::{detail_decomposition_check, Distribution, ParameterSpace, SparseGrid, Surrogate};

type Check = Result<String, String>;

fn ensure(ok: bool, message: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(message.into())
    }
}

fn rng(seed: u64) -> rand::rngs::StdRng {
    rand::rngs::StdRng::seed_from_u64(seed)
}

fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn beam_config() -> LoadedConfig {
    LoadedConfig::read(&repo_path("configs/beam_proxy.json")).expect("beam proxy config")
}

// ------------------------------------------------------------------ 1, 2

fn combination_coefficients() -> Check {
    let set = MultiIndexSet::generate(IndexSetKind::Sum, 2, 3).map_err(|e| e.to_string())?;
    let c = set.combination_coefficients().map_err(|e| e.to_string())?;
    let got: BTreeSet<(Vec<u32>, i64)> = c.nonzero().map(|(i, v)| (i.levels().to_vec(), v)).collect();
    let expected: BTreeSet<(Vec<u32>, i64)> = [
        (vec![1, 3], -1),
        (vec![1, 4], 1),
        (vec![2, 2], -1),
        (vec![2, 3], 1),
        (vec![3, 1], -1),
        (vec![3, 2], 1),
        (vec![4, 1], 1),
    ]
    .into_iter()
    .collect();
    ensure(got == expected, format!("nonzero coefficients {got:?}"))?;
    let space = ParameterSpace::uniform(&[("a", 0.0, 1.0), ("b", 0.0, 1.0)]).unwrap();
    let grid = SparseGrid::new(space, set).map_err(|e| e.to_string())?;
    ensure(grid.len() == 25, format!("{} points", grid.len()))?;
    Ok("7 signed tensor grids, 25 points".into())
}

fn grid_size() -> Check {
    let space = ParameterSpace::uniform(&[("T_A", 1130.0, 1450.0), ("log_h_p", -5.0, 0.0), ("log_h_g", -5.0, 0.0)]).unwrap();
    let set = MultiIndexSet::generate(IndexSetKind::Max, 3, 1).map_err(|e| e.to_string())?;
    let grid = SparseGrid::new(space, set).map_err(|e| e.to_string())?;
    ensure(grid.len() == 27, format!("{} points", grid.len()))?;
    for (a, b) in [(1130.0, 1450.0), (-5.0, 0.0), (-1.0, 1.0)] {
        let k = knots_for_level(&KnotFamily::SymmetricLeja { a, b }, 2).map_err(|e| e.to_string())?;
        ensure(k.points() == [b, a, 0.5 * (a + b)], format!("level-2 knots on [{a}, {b}]: {:?}", k.points()))?;
    }
    Ok("27 points; level-2 knots {b, a, (a+b)/2}".into())
}

// ------------------------------------------------------------------ 3, 4

fn interpolation_and_exactness() -> Check {
    // the surrogates the workflow builds: GSA, inversion and a wider Ishigami grid
    let model = builtin("beam_proxy").unwrap();
    let beam = ParameterSpace::uniform(&[("T_A", 1130.0, 1450.0), ("log_h_p", -5.0, 0.0)]).unwrap();
    let beam_grid = SparseGrid::new(beam, MultiIndexSet::generate(IndexSetKind::Sum, 2, 3).unwrap()).unwrap();
    let rows = model.evaluate_batch(beam_grid.points()).unwrap();
    let beam_sur = Surrogate::from_point_rows(beam_grid.clone(), model.output_names().to_vec(), &rows).unwrap();
    let cube = ParameterSpace::uniform(&[("x1", -PI, PI), ("x2", -PI, PI), ("x3", -PI, PI)]).unwrap();
    let cube_grid = SparseGrid::new(cube, MultiIndexSet::generate(IndexSetKind::Sum, 3, 6).unwrap()).unwrap();
    let ish = Surrogate::from_fn(cube_grid.clone(), "f", ishigami).unwrap();

    let mut worst = 0.0f64;
    for (m, p) in beam_grid.points().iter().enumerate() {
        let y = beam_sur.evaluate(p).unwrap();
        for (k, v) in y.iter().enumerate() {
            worst = worst.max((v - rows[m][k]).abs() / rows[m][k].abs().max(f64::MIN_POSITIVE));
        }
    }
    for p in cube_grid.points() {
        let exact = ishigami(p);
        let got = ish.evaluate(p).unwrap()[0];
        worst = worst.max((got - exact).abs() / exact.abs().max(1.0));
    }
    ensure(worst <= 1e-12, format!("grid-point relative error {worst:e}"))?;

    let mut r = rng(1);
    let mut pu = 0.0f64;
    for _ in 0..1000 {
        let v = [r.random_range(1130.0..=1450.0), r.random_range(-5.0..=0.0)];
        let s: f64 = beam_grid.weights_at(&v).unwrap().iter().sum();
        pu = pu.max((s - 1.0).abs());
        let v = [r.random_range(-PI..=PI), r.random_range(-PI..=PI), r.random_range(-PI..=PI)];
        let s: f64 = cube_grid.weights_at(&v).unwrap().iter().sum();
        pu = pu.max((s - 1.0).abs());
    }
    ensure(pu <= 1e-12, format!("partition of unity off by {pu:e}"))?;

    let space = ParameterSpace::uniform(&[("a", -1.0, 2.0), ("b", 0.0, 1.0)]).unwrap();
    let mut poly = 0.0f64;
    for w in 1..=4u32 {
        let d = 2 * w as i32;
        let coeffs: Vec<f64> = (0..(d + 1) * (d + 1)).map(|_| r.random_range(-1.0..1.0)).collect();
        let f = |v: &[f64]| {
            let mut s = 0.0;
            for p in 0..=d {
                for q in 0..=d {
                    s += coeffs[(p * (d + 1) + q) as usize] * v[0].powi(p) * v[1].powi(q);
                }
            }
            s
        };
        let grid = SparseGrid::new(space.clone(), MultiIndexSet::generate(IndexSetKind::Max, 2, w).unwrap()).unwrap();
        let s = Surrogate::from_fn(grid, "f", f).unwrap();
        for _ in 0..200 {
            let v = [r.random_range(-1.0..=2.0), r.random_range(0.0..=1.0)];
            let exact = f(&v);
            poly = poly.max((s.evaluate(&v).unwrap()[0] - exact).abs() / exact.abs().max(1.0));
        }
    }
    ensure(poly <= 1e-10, format!("polynomial reproduction error {poly:e}"))?;
    Ok(format!("grid points {worst:.1e}, partition of unity {pu:.1e}, degree-2w polynomials {poly:.1e}"))
}

fn detail_sum() -> Check {
    let beam_model = builtin("beam_proxy").unwrap();
    let beam_u5 = move |v: &[f64]| beam_model.evaluate(v).unwrap()[4];
    let smooth = |v: &[f64]| (0.3 * v[0]).exp() / (1.0 + v[1] * v[1]);
    let ish2 = |v: &[f64]| ishigami(&[v[0], v[1], 1.0]);
    let beam = ParameterSpace::uniform(&[("T_A", 1130.0, 1450.0), ("log_h_p", -5.0, 0.0)]).unwrap();
    let cube = ParameterSpace::uniform(&[("x1", -PI, PI), ("x2", -PI, PI)]).unwrap();
    let box2 = ParameterSpace::uniform(&[("a", -1.0, 1.0), ("b", -2.0, 3.0)]).unwrap();
    let idx = |l: &[u32]| MultiIndex::new(l.to_vec()).unwrap();
    let sets = [
        MultiIndexSet::generate(IndexSetKind::Sum, 2, 3).unwrap(),
        MultiIndexSet::generate(IndexSetKind::Max, 2, 2).unwrap(),
        MultiIndexSet::from_indices(
            2,
            vec![idx(&[1, 1]), idx(&[2, 1]), idx(&[3, 1]), idx(&[1, 2]), idx(&[2, 2]), idx(&[1, 3]), idx(&[1, 4])],
        )
        .unwrap(),
    ];
    let cases: [(&ParameterSpace, &dyn Fn(&[f64]) -> f64); 3] = [(&box2, &smooth), (&cube, &ish2), (&beam, &beam_u5)];
    let mut worst = 0.0f64;
    for (space, f) in cases {
        for set in &sets {
            let c = detail_decomposition_check(space, set, f, 50, 1, 1e-10).map_err(|e| e.to_string())?;
            worst = worst.max(c.max_relative_difference);
        }
    }
    ensure(worst <= 1e-10, format!("max relative difference {worst:e}"))?;
    Ok(format!("9 cases, max relative difference {worst:.1e}"))
}

// ------------------------------------------------------------------ 5

const LEJA_GRID: usize = 1_000_000;

fn leja_log_objective(x: f64, points: &[f64], gaussian: bool) -> f64 {
    let w = if gaussian { -x * x / 4.0 } else { 0.0 };
    w + points.iter().map(|p| (x - p).abs().ln()).sum::<f64>()
}

fn leja_slope(x: f64, points: &[f64], gaussian: bool) -> f64 {
    let w = if gaussian { -x / 2.0 } else { 0.0 };
    w + points.iter().map(|p| 1.0 / (x - p)).sum::<f64>()
}

/// Whole-interval scan followed by bisection on the derivative.
fn leja_argmax(lo: f64, hi: f64, points: &[f64], gaussian: bool) -> f64 {
    let h = (hi - lo) / LEJA_GRID as f64;
    let mut best = (f64::NEG_INFINITY, 0);
    for k in 0..=LEJA_GRID {
        let v = leja_log_objective(lo + h * k as f64, points, gaussian);
        if v > best.0 {
            best = (v, k);
        }
    }
    let x0 = lo + h * best.1 as f64;
    let (mut a, mut b) = ((x0 - h).max(lo), (x0 + h).min(hi));
    if leja_slope(b, points, gaussian) > 0.0 {
        return b;
    }
    if leja_slope(a, points, gaussian) < 0.0 {
        return a;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if leja_slope(m, points, gaussian) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn leja_oracle(n: usize, lo: f64, hi: f64, seeds: &[f64], gaussian: bool) -> Vec<f64> {
    let mid = 0.5 * (lo + hi);
    let mut p: Vec<f64> = seeds.to_vec();
    while p.len() < n {
        let x = leja_argmax(lo, hi, &p, gaussian);
        let chosen = x.min(2.0 * mid - x);
        p.push(chosen);
        if p.len() < n {
            p.push(2.0 * mid - chosen);
        }
    }
    p
}

fn leja() -> Check {
    let uniform = leja_oracle(9, -1.0, 1.0, &[1.0, -1.0, 0.0], false);
    let gaussian = leja_oracle(9, -20.0, 20.0, &[0.0], true);
    let got_u = symmetric_leja(9, -1.0, 1.0).map_err(|e| e.to_string())?.into_inner();
    let got_g = symmetric_gaussian_leja(9, 0.0, 1.0).map_err(|e| e.to_string())?.into_inner();
    let du = uniform.iter().zip(&got_u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let dg = gaussian.iter().zip(&got_g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(du < 1e-8, format!("symmetric Leja off by {du:e}"))?;
    ensure(dg < 1e-8, format!("Gaussian Leja off by {dg:e}"))?;

    for (family, center, first_pair) in [
        (KnotFamily::SymmetricLeja { a: -1.0, b: 1.0 }, 0.0, 3),
        (KnotFamily::SymmetricGaussianLeja { mean: 0.0, std: 1.0 }, 0.0, 1),
    ] {
        for level in 1..5 {
            let short = knots_for_level(&family, level).unwrap();
            let long = knots_for_level(&family, level + 1).unwrap();
            ensure(long.points()[..short.len()] == *short.points(), format!("{family:?} not nested at level {level}"))?;
        }
        let p = knots_for_level(&family, 5).unwrap().into_inner();
        for k in (first_pair..p.len() - 1).step_by(2) {
            ensure(((p[k] - center) + (p[k + 1] - center)).abs() < 1e-12, format!("{family:?}: pair {k} not mirrored"))?;
        }
    }
    Ok(format!("max deviation {:.1e} (uniform), {:.1e} (Gaussian); nested and symmetric to level 5", du, dg))
}

// ------------------------------------------------------------------ 6

fn circle_mean(f: impl Fn(f64) -> f64) -> f64 {
    let n = 20_000;
    let h = 2.0 * PI / n as f64;
    let mut s = f(-PI) + f(PI);
    for k in 1..n {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(-PI + h * k as f64);
    }
    s * h / 3.0 / (2.0 * PI)
}

/// Partial variances of the Ishigami function from one-dimensional moments.
fn ishigami_indices(a: f64, b: f64) -> ([f64; 3], [f64; 3]) {
    let m4 = circle_mean(|x| x.powi(4));
    let m8 = circle_mean(|x| x.powi(8));
    let s2 = circle_mean(|x| x.sin().powi(2));
    let s4 = circle_mean(|x| x.sin().powi(4));
    let d1 = (1.0 + b * m4).powi(2) * s2;
    let d2 = a * a * (s4 - s2 * s2);
    let d13 = b * b * s2 * (m8 - m4 * m4);
    let d = d1 + d2 + d13;
    ([d1 / d, d2 / d, 0.0], [(d1 + d13) / d, d2 / d, d13 / d])
}

fn sobol() -> Check {
    let loaded = LoadedConfig::read(&repo_path("configs/ishigami.json")).map_err(|e| e.to_string())?;
    let model = open_model(&loaded.config.model).map_err(|e| e.to_string())?;
    let (so, to) = ishigami_indices(7.0, 0.1);
    let mut s = [0.0; 3];
    let mut t = [0.0; 3];
    for seed in 1..=5 {
        let mut config = loaded.config.clone();
        config.gsa.seed = seed;
        config.gsa.sample_size = 16384;
        let outcome = run_gsa(&config, model.as_ref()).map_err(|e| e.to_string())?;
        let out = &outcome.report.outputs[0];
        for n in 0..3 {
            s[n] += out.principal[n] / 5.0;
            t[n] += out.total[n] / 5.0;
        }
    }
    let err = (0..3).map(|n| (s[n] - so[n]).abs().max((t[n] - to[n]).abs())).fold(0.0, f64::max);
    ensure(err < 0.02, format!("S {s:?} T {t:?} vs S {so:?} T {to:?}"))?;
    Ok(format!(
        "S = ({:.4}, {:.4}, {:.4}), T = ({:.4}, {:.4}, {:.4}); max deviation {err:.4}",
        s[0], s[1], s[2], t[0], t[1], t[2]
    ))
}

// ------------------------------------------------------------------ 7

fn inversion() -> Check {
    let loaded = beam_config();
    let config = loaded.config.clone();
    let model = open_model(&config.model).map_err(|e| e.to_string())?;
    let dims = vec!["T_A".to_string(), "log_h_p".to_string()];
    let outcome = run_invert(&config, model.as_ref(), &dims, false).map_err(|e| e.to_string())?;
    let surrogate = &outcome.surrogate;
    let target = outcome.target.as_ref().ok_or("no synthetic target")?;
    let ids = outcome.report.measurements.location_ids.clone();
    let sigma = config.inversion.noise_std;

    // (c) the default run
    let kinds: Vec<Identifiability> = outcome.report.posterior.marginals.iter().map(|m| m.classification).collect();
    let c_ok = matches!(outcome.report.posterior.marginals[0].distribution, Distribution::Gaussian { .. })
        && matches!(outcome.report.posterior.marginals[1].distribution, Distribution::Uniform { .. });

    // (a) and (b): repeated synthetic data on the same surrogate
    let run_seed = |seed: u64| -> Result<sguq::stages::InversionReport, String> {
        let data = synthesize_from_outputs(&target.outputs, &target.v, &ids, sigma, seed).map_err(|e| e.to_string())?;
        invert(surrogate, &data, &config.inversion).map_err(|e| e.to_string())
    };
    let mut covered = 0;
    let mut classified = 0;
    let mut sigma2_sum = 0.0;
    for seed in 1..=200u64 {
        let report = run_seed(seed)?;
        sigma2_sum += report.sigma2_map;
        if seed <= 100 {
            let row = report.laplace.dims.iter().position(|&d| d == 0);
            if let Some(row) = row {
                let sd = report.laplace.covariance[row][row].sqrt();
                if (report.map.v_map[0] - target.v[0]).abs() <= 3.0 * sd {
                    covered += 1;
                }
            }
            let m = &report.posterior.marginals;
            if matches!(m[0].distribution, Distribution::Gaussian { .. })
                && matches!(m[1].distribution, Distribution::Uniform { .. })
            {
                classified += 1;
            }
        }
    }
    let ratio = sigma2_sum / 200.0 / (sigma * sigma);

    // (d) linear-Gaussian covariance against σ²(AᵀA)⁻¹
    let a = [[1.0, 2.0], [0.5, -1.0], [3.0, 0.25], [-0.7, 0.4]];
    let v_true = [0.3, -0.4];
    let linear = move |v: &[f64]| -> Vec<f64> { a.iter().map(|r| r[0] * v[0] + r[1] * v[1]).collect() };
    let data = Measurements {
        location_ids: vec![0, 1, 2, 3],
        values: linear(&v_true),
        noise_std: 0.1,
        seed: None,
        target: None,
    };
    let problem = InverseProblem::new(linear, &data, vec![(-1.0, 1.0), (-1.0, 1.0)]).map_err(|e| e.to_string())?;
    let s2 = 0.01;
    let laplace = laplace_covariance(&problem, &v_true, s2, &FiniteDifferenceSteps::default()).map_err(|e| e.to_string())?;
    let mut ata = [[0.0; 2]; 2];
    for r in &a {
        for i in 0..2 {
            for j in 0..2 {
                ata[i][j] += r[i] * r[j];
            }
        }
    }
    let det = ata[0][0] * ata[1][1] - ata[0][1] * ata[1][0];
    let inv = [[ata[1][1] / det, -ata[0][1] / det], [-ata[1][0] / det, ata[0][0] / det]];
    let mut d_err = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            d_err = d_err.max((laplace.covariance[i][j] - s2 * inv[i][j]).abs() / (s2 * inv[i][j]).abs());
        }
    }

    let detail = format!(
        "(a) {covered}/100 within 3 sd; (b) mean sigma2_MAP / sigma^2 = {ratio:.3}; (c) default run {kinds:?}, {classified}/100 seeds Gaussian+Uniform; (d) relative error {d_err:.1e}"
    );
    let ok = covered >= 95 && (ratio - 1.0).abs() <= 0.25 && c_ok && d_err <= 1e-6;
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ------------------------------------------------------------------ 8

fn convergence() -> Check {
    let loaded = beam_config();
    let model = open_model(&loaded.config.model).map_err(|e| e.to_string())?;
    let dims = vec!["T_A".to_string(), "log_h_p".to_string()];
    let outcome = run_invert(&loaded.config, model.as_ref(), &dims, true).map_err(|e| e.to_string())?;
    let v = outcome.validation.ok_or("no validation report")?;
    ensure(v.samples.len() == 50, format!("{} validation samples", v.samples.len()))?;
    let ppe: Vec<f64> = v.levels.iter().map(|l| l.max_e_ppe).collect();
    let mse: Vec<f64> = v.levels.iter().map(|l| l.max_e_mse).collect();
    let list = |x: &[f64]| x.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>().join(" > ");
    let detail = format!("E_PPE {}, E_MSE {}", list(&ppe), list(&mse));
    ensure(ppe.len() == 4, detail.clone())?;
    ensure(ppe.windows(2).all(|w| w[1] < w[0]) && mse.windows(2).all(|w| w[1] < w[0]), format!("not decreasing: {detail}"))?;
    ensure(ppe[3] < 1e-2, format!("final E_PPE too large: {detail}"))?;
    Ok(detail)
}

// ------------------------------------------------------------------ 9, 10

fn pipeline(validate: bool, out: &Path) -> Result<Manifest, String> {
    let loaded = beam_config();
    let options = RunOptions {
        command: Command::Pipeline,
        validate,
        compare_prior: true,
        out: Some(out.to_path_buf()),
    };
    execute(&loaded, &options).map(|(_, m)| m).map_err(|e| e.to_string())
}

fn forward_uq(run_dir: &Path) -> Check {
    pipeline(true, run_dir)?;
    let bands = fs::read_to_string(run_dir.join("forward").join(BANDS_FILE)).map_err(|e| e.to_string())?;
    let rows = parse_band_csv(&bands)?;
    ensure(rows.len() == 120, format!("{} band rows", rows.len()))?;
    let mut narrower = 0;
    let mut inside = 0;
    for r in &rows {
        let (_, p5, p95) = r.prior.ok_or("missing prior band")?;
        let (_, q5, q95) = r.posterior;
        if q95 - q5 < p95 - p5 {
            narrower += 1;
        }
        let t = r.target_value.ok_or("missing target value")?;
        if (q5..=q95).contains(&t) {
            inside += 1;
        }
    }
    let summary: ForwardSummary =
        serde_json::from_slice(&fs::read(run_dir.join("forward").join(SUMMARY_FILE)).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let mut integral = 0.0f64;
    for l in &summary.locations {
        integral = integral.max((l.posterior.integral - 1.0).abs());
        if let Some(p) = &l.prior {
            integral = integral.max((p.integral - 1.0).abs());
        }
    }

    // standard-normal KDE quantiles
    let standard = PosteriorSpec {
        marginals: vec![Marginal {
            name: "z".into(),
            distribution: Distribution::Gaussian { mean: 0.0, std: 1.0 },
            classification: Identifiability::Identifiable,
            confidence_set: (-50.0, 50.0),
            confidence_fraction: 0.0,
        }],
        bounds: vec![(-50.0, 50.0)],
        v_map: vec![0.0],
        sigma2_map: 0.0,
        covariance: Vec::new(),
        covariance_dims: Vec::new(),
        independence_assumed: true,
    };
    let z: Vec<f64> = sample_posterior(&standard, 10_000, 1).map_err(|e| e.to_string())?.into_iter().map(|v| v[0]).collect();
    let kde = estimate_density(&z, 512).map_err(|e| e.to_string())?;
    let z95 = 1.6448536269514722;
    let q_err = (kde.q05 + z95).abs().max((kde.q95 - z95).abs());

    let detail = format!(
        "narrower {narrower}/120, target inside {inside}/120, max |KDE integral - 1| {integral:.1e}, normal quantile error {q_err:.3}"
    );
    if narrower as f64 >= 0.95 * 120.0 && inside as f64 >= 0.95 * 120.0 && integral <= 1e-3 && q_err <= 0.03 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Every file under `dir`, relative path to bytes; manifest timestamps blanked.
fn snapshot(dir: &Path) -> Result<Vec<(PathBuf, Vec<u8>)>, String> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let mut bytes = fs::read(&path).map_err(|e| e.to_string())?;
            let rel = path.strip_prefix(dir).unwrap().to_path_buf();
            if rel == Path::new("manifest.json") {
                let mut m: Manifest = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
                m.started.clear();
                m.finished.clear();
                bytes = serde_json::to_vec(&m).unwrap();
            }
            out.push((rel, bytes));
        }
    }
    out.sort();
    Ok(out)
}

fn accounting(validated_run: &Path, scratch: &Path) -> Check {
    let plain = pipeline(false, &scratch.join("plain"))?;
    let per_stage: Vec<usize> = plain.stages.iter().map(|s| s.model_evaluations).collect();
    ensure(per_stage == [27, 25, 25] && plain.model_evaluations == 77, format!("plain run {per_stage:?}, total {}", plain.model_evaluations))?;
    let rerun = pipeline(true, &scratch.join("rerun"))?;
    ensure(
        rerun.model_evaluations == 177 && rerun.validation_evaluations == 100 && rerun.grid_evaluations == 77,
        format!("validated run: {} total, {} validation", rerun.model_evaluations, rerun.validation_evaluations),
    )?;
    let a = snapshot(validated_run)?;
    let b = snapshot(&scratch.join("rerun"))?;
    ensure(!a.is_empty() && a == b, "rerun differs from the first run")?;
    Ok(format!(
        "27 + 25 + 25 = {} evaluations, {} with validation; {} files byte-identical on rerun",
        plain.model_evaluations,
        rerun.model_evaluations,
        a.len()
    ))
}

// ------------------------------------------------------------------ driver

fn main() {
    let scratch = tempfile::tempdir().expect("temporary directory");
    let validated = scratch.path().join("validated");
    let scratch_path = scratch.path().to_path_buf();

    let criteria: Vec<(u32, &str, Duration, Box<dyn FnOnce() -> Check>)> = vec![
        (1, "combination coefficients (Sum, N=2, w=3)", Duration::from_secs(1), Box::new(combination_coefficients)),
        (2, "grid size (Max, N=3, w=1) and level-2 knots", Duration::from_secs(1), Box::new(grid_size)),
        (3, "interpolation, partition of unity, polynomial exactness", Duration::from_secs(10), Box::new(interpolation_and_exactness)),
        (4, "combination technique equals detail sum", Duration::from_secs(10), Box::new(detail_sum)),
        (5, "Leja points against brute-force oracle", Duration::from_secs(60), Box::new(leja)),
        (6, "Ishigami Sobol indices", Duration::from_secs(30), Box::new(sobol)),
        (7, "inversion consistency on the beam proxy", Duration::from_secs(300), Box::new(inversion)),
        (8, "validation errors decrease with w", Duration::from_secs(30), Box::new(convergence)),
        (9, "forward bands and density estimates", Duration::from_secs(120), Box::new({
            let dir = validated.clone();
            move || forward_uq(&dir)
        })),
        (10, "pipeline accounting and determinism", Duration::from_secs(300), Box::new(move || accounting(&validated, &scratch_path))),
    ];

    let mut failed = 0;
    for (n, title, limit, check) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let (ok, detail) = match result {
            Ok(d) if elapsed <= limit => (true, d),
            Ok(d) => (false, format!("{d}; took {:.1} s, limit {} s", elapsed.as_secs_f64(), limit.as_secs())),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} criterion {n:>2}: {title} [{:.2} s] {detail}",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
