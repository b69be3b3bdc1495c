//! The three workflow stages as in-memory computations plus their file writers.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sguq_core::forward::{propagate_spec, DensityEstimate};
use sguq_core::gsa::{rank_parameters, sobol_indices, OutputIndices, Ranking, Sampler, SobolOptions, SobolResult};
use sguq_core::inversion::{
    build_posterior, find_map, laplace_covariance_on, log_likelihood, prior_box, profile_likelihood,
    sigma_map, synthesize_from_outputs, InverseProblem, InversionError, Laplace, MapOptions, MapResult,
    Measurements, PosteriorOptions, PosteriorSpec, Profile, SurrogatePredictor,
};
use sguq_core::models::Model;
use sguq_core::multi_index::{IndexSetKind, MultiIndexSet};
use sguq_core::surrogate::{
    validation_errors_from_values, Distribution, Parameter, ParameterSpace, SparseGrid, Surrogate,
    ValidationErrors,
};

use crate::config::{GridSpec, InversionConfig, RunConfig};
use crate::error::{Error, Result, Stage};
use crate::evaluation::{parameters, resolve_outputs, StageModel};
use crate::formats::{band_csv, read_json, write_file, write_json, write_surrogate, BandRow, IndexSetFile};

pub const SOBOL_FILE: &str = "sobol.json";
pub const INDEX_SET_FILE: &str = "index_set.json";
pub const SURROGATE_FILE: &str = "surrogate.json";
pub const MEASUREMENTS_FILE: &str = "measurements.json";
pub const TARGET_FILE: &str = "target.json";
pub const REPORT_FILE: &str = "report.json";
pub const POSTERIOR_FILE: &str = "posterior.json";
pub const VALIDATION_FILE: &str = "validation.json";
pub const BANDS_FILE: &str = "bands.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const DENSITIES_FILE: &str = "densities.json";

/// Model evaluations spent by one stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evaluations {
    /// Grid points of surrogates built in this stage.
    pub grid: usize,
    /// Reference runs for surrogate validation.
    pub validation: usize,
    /// The noise-free run at the synthetic target.
    pub synthetic_data: usize,
}

/// Builds the sparse grid of `spec` on `space` and fills it with one model batch.
pub fn build_surrogate(
    stage: Stage,
    space: ParameterSpace,
    spec: GridSpec,
    model: &dyn Model,
) -> Result<Surrogate> {
    let set = MultiIndexSet::generate(spec.kind, space.dim(), spec.w).map_err(|e| Error::index_set(stage, e))?;
    let grid = SparseGrid::new(space, set).map_err(|e| Error::surrogate(stage, e))?;
    log::info!("{stage}: evaluating the model at {} grid points", grid.len());
    let rows = model
        .evaluate_batch(grid.points())
        .map_err(|e| Error::model(stage, e))?;
    Surrogate::from_point_rows(grid, model.output_names().to_vec(), &rows).map_err(|e| Error::surrogate(stage, e))
}

fn write_grid_files(dir: &Path, stage: Stage, surrogate: &Surrogate, files: &mut Vec<String>) -> Result<()> {
    let set = IndexSetFile::from_set(surrogate.grid().index_set()).map_err(|e| Error::index_set(stage, e))?;
    write_json(&dir.join(INDEX_SET_FILE), &set)?;
    write_surrogate(&dir.join(SURROGATE_FILE), surrogate)?;
    files.push(format!("{stage}/{INDEX_SET_FILE}"));
    files.push(format!("{stage}/{SURROGATE_FILE}"));
    Ok(())
}

// ---------------------------------------------------------------- gsa

pub struct GsaOutcome {
    pub surrogate: Surrogate,
    pub report: SobolReport,
    pub evaluations: Evaluations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolReport {
    pub parameters: Vec<String>,
    pub outputs: Vec<OutputIndices>,
    pub sample_size: usize,
    pub seed: u64,
    pub sampler: Sampler,
    pub threshold: f64,
    pub excluded_outputs: Vec<String>,
    pub keep: Vec<String>,
    pub drop: Vec<String>,
    pub keep_indices: Vec<usize>,
    pub drop_indices: Vec<usize>,
}

impl SobolReport {
    fn new(result: SobolResult, ranking: &Ranking, threshold: f64, excluded: Vec<String>) -> Self {
        let pick = |ids: &[usize]| ids.iter().map(|&n| result.parameters[n].clone()).collect();
        Self {
            keep: pick(&ranking.keep),
            drop: pick(&ranking.drop),
            keep_indices: ranking.keep.clone(),
            drop_indices: ranking.drop.clone(),
            parameters: result.parameters,
            outputs: result.outputs,
            sample_size: result.sample_size,
            seed: result.seed,
            sampler: result.sampler,
            threshold,
            excluded_outputs: excluded,
        }
    }
}

pub fn run_gsa(config: &RunConfig, model: &dyn Model) -> Result<GsaOutcome> {
    let params = parameters(config)?;
    if let Some(p) = params.iter().find(|p| !p.distribution.is_uniform()) {
        return Err(Error::Config(format!(
            "sensitivity analysis needs uniform priors; {:?} is not uniform",
            p.name
        )));
    }
    let names: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
    let space = ParameterSpace::new(params).map_err(|e| Error::Config(e.to_string()))?;
    let excluded = resolve_outputs(model, &config.gsa.exclude_outputs)?;
    let stage_model = StageModel::new(model, &names, config)?;
    let surrogate = build_surrogate(Stage::Gsa, space, config.gsa.grid, &stage_model)?;
    let options = SobolOptions {
        sample_size: config.gsa.sample_size,
        seed: config.gsa.seed,
        sampler: config.gsa.sampler,
    };
    log::info!(
        "gsa: Sobol indices of {} outputs from {} surrogate samples",
        surrogate.outputs(),
        options.sample_size * (names.len() + 2)
    );
    let result = sobol_indices(&surrogate, &options).map_err(Error::gsa)?;
    let participating: Vec<usize> = (0..surrogate.outputs()).filter(|k| !excluded.contains(k)).collect();
    let ranking = rank_parameters(&result, config.gsa.threshold, &participating).map_err(Error::gsa)?;
    let excluded_names = excluded.iter().map(|&k| surrogate.output_names()[k].clone()).collect();
    let report = SobolReport::new(result, &ranking, config.gsa.threshold, excluded_names);
    log::info!("gsa: keep {:?}, drop {:?}", report.keep, report.drop);
    Ok(GsaOutcome {
        report,
        evaluations: Evaluations {
            grid: stage_model.evaluations(),
            ..Evaluations::default()
        },
        surrogate,
    })
}

pub fn write_gsa(dir: &Path, outcome: &GsaOutcome) -> Result<Vec<String>> {
    let mut files = Vec::new();
    write_grid_files(dir, Stage::Gsa, &outcome.surrogate, &mut files)?;
    write_json(&dir.join(SOBOL_FILE), &outcome.report)?;
    files.push(format!("gsa/{SOBOL_FILE}"));
    Ok(files)
}

// ---------------------------------------------------------------- invert

/// Model outputs at the synthetic target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRecord {
    pub parameters: Vec<String>,
    pub v: Vec<f64>,
    pub output_names: Vec<String>,
    pub outputs: Vec<f64>,
}

/// Measured data as supplied in `inversion.data_file`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataFile {
    pub locations: Vec<String>,
    pub values: Vec<f64>,
    pub noise_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankDeficiency {
    pub null_direction: Vec<f64>,
    pub eigenvalue_ratio: f64,
    /// Dimension left out of the covariance because of this deficiency.
    pub removed_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionReport {
    pub parameters: Vec<String>,
    pub location_names: Vec<String>,
    pub measurements: Measurements,
    pub map: MapResult,
    pub sigma2_map: f64,
    pub log_likelihood_at_map: f64,
    pub laplace: Laplace,
    pub rank_deficiencies: Vec<RankDeficiency>,
    pub profiles: Vec<Profile>,
    pub posterior: PosteriorSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationLevel {
    pub kind: IndexSetKind,
    pub w: u32,
    pub points: usize,
    pub max_e_ppe: f64,
    pub max_e_mse: f64,
    pub errors: ValidationErrors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub output_names: Vec<String>,
    pub samples: Vec<Vec<f64>>,
    pub levels: Vec<ValidationLevel>,
}

pub struct InvertOutcome {
    pub surrogate: Surrogate,
    pub report: InversionReport,
    pub target: Option<TargetRecord>,
    pub validation: Option<ValidationReport>,
    pub fixed_inputs: Vec<(String, f64)>,
    pub evaluations: Evaluations,
}

/// The uniform prior space over `dims`, in that order.
pub fn stage_space(config: &RunConfig, dims: &[String]) -> Result<ParameterSpace> {
    let params = parameters(config)?;
    let picked = dims
        .iter()
        .map(|d| {
            params
                .iter()
                .find(|p| &p.name == d)
                .cloned()
                .ok_or_else(|| Error::Config(format!("unknown parameter {d:?}")))
        })
        .collect::<Result<Vec<Parameter>>>()?;
    if let Some(p) = picked.iter().find(|p| !p.distribution.is_uniform()) {
        return Err(Error::Config(format!(
            "inversion needs uniform priors; {:?} is not uniform",
            p.name
        )));
    }
    ParameterSpace::new(picked).map_err(|e| Error::Config(e.to_string()))
}

/// Inversion dimensions: explicit list, else the keep-list of a GSA result file.
pub fn inversion_dims(config: &RunConfig, gsa_keep: Option<&[String]>) -> Result<Vec<String>> {
    if let Some(p) = &config.inversion.parameters {
        return Ok(p.clone());
    }
    if let Some(keep) = gsa_keep {
        return Ok(keep.to_vec());
    }
    if let Some(path) = &config.inversion.gsa_result {
        let report: SobolReport = read_json(path)?;
        return Ok(report.keep);
    }
    Err(Error::Config(
        "inversion needs \"inversion.parameters\" or a GSA result (\"inversion.gsa_result\")".into(),
    ))
}

/// Synthetic measurements: one model run at the configured target plus seeded noise.
pub fn synthesize(
    config: &RunConfig,
    model: &dyn Model,
    space: &ParameterSpace,
    location_ids: &[usize],
) -> Result<(Measurements, TargetRecord)> {
    let target = config.inversion.target.as_ref().ok_or_else(|| {
        Error::Config("inversion needs \"target\" (synthetic data) or \"data_file\"".into())
    })?;
    let names: Vec<String> = space.names().map(String::from).collect();
    if let Some(extra) = target.keys().find(|k| !names.contains(k)) {
        return Err(Error::Config(format!("target names {extra:?}, which is not an inversion dimension")));
    }
    let v = names
        .iter()
        .map(|n| {
            target
                .get(n)
                .copied()
                .ok_or_else(|| Error::Config(format!("target lacks a value for {n:?}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if !space.contains(&v) {
        return Err(Error::Config(format!("target {v:?} lies outside the prior box")));
    }
    let outputs = model.evaluate(&v).map_err(|e| Error::model(Stage::Invert, e))?;
    let data = synthesize_from_outputs(
        &outputs,
        &v,
        location_ids,
        config.inversion.noise_std,
        config.inversion.noise_seed,
    )
    .map_err(Error::inversion)?;
    Ok((
        data,
        TargetRecord {
            parameters: names,
            v,
            output_names: model.output_names().to_vec(),
            outputs,
        },
    ))
}

/// MAP search, Laplace covariance, profiles and the mixed posterior on a built surrogate.
pub fn invert(surrogate: &Surrogate, data: &Measurements, options: &InversionConfig) -> Result<InversionReport> {
    let space = surrogate.grid().space();
    let names: Vec<String> = space.names().map(String::from).collect();
    let bounds = prior_box(space).map_err(Error::inversion)?;
    let predictor = SurrogatePredictor {
        surrogate,
        locations: &data.location_ids,
    };
    let problem = InverseProblem::new(predictor, data, bounds.clone()).map_err(Error::inversion)?;
    let map = find_map(
        &problem,
        &MapOptions {
            n_starts: options.n_starts,
            seed: options.seed,
            nelder_mead: options.nelder_mead,
        },
    )
    .map_err(Error::inversion)?;
    let k = data.len();
    let sigma2 = sigma_map(map.ls_min, k);
    log::info!(
        "invert: v_MAP {:?}, LS_min {:e}, sigma2_MAP {:e}, {} clusters",
        map.v_map,
        map.ls_min,
        sigma2,
        map.clusters.len()
    );

    let mut dims: Vec<usize> = (0..names.len()).collect();
    let mut rank_deficiencies = Vec::new();
    let laplace = loop {
        match laplace_covariance_on(&problem, &map.v_map, sigma2, &options.fd_steps, &dims) {
            Ok(l) => break l,
            Err(InversionError::RankDeficient {
                null_direction,
                ratio,
            }) => {
                let removed = *dims
                    .iter()
                    .max_by(|&&a, &&b| null_direction[a].abs().total_cmp(&null_direction[b].abs()))
                    .expect("dims is non-empty");
                log::warn!(
                    "invert: JᵀJ is singular along {null_direction:?}; computing the covariance without {:?}",
                    names[removed]
                );
                rank_deficiencies.push(RankDeficiency {
                    null_direction,
                    eigenvalue_ratio: ratio,
                    removed_dim: removed,
                });
                dims.retain(|&n| n != removed);
                if dims.is_empty() {
                    break Laplace {
                        covariance: Vec::new(),
                        dims: Vec::new(),
                        jacobian: Vec::new(),
                        hessian_term: Vec::new(),
                        gauss_newton_fallback: false,
                        one_sided: Vec::new(),
                    };
                }
            }
            Err(e) => return Err(Error::inversion(e)),
        }
    };
    if laplace.gauss_newton_fallback {
        log::warn!("invert: Hessian term dropped (Gauss-Newton covariance)");
    }

    let profiles = (0..names.len())
        .map(|n| profile_likelihood(&problem, n, &map.v_map, options.profile_points))
        .collect::<Result<Vec<_>, _>>()
        .map_err(Error::inversion)?;
    let posterior = build_posterior(
        &names,
        &map,
        sigma2,
        &laplace,
        &profiles,
        &bounds,
        &PosteriorOptions {
            confidence_factor: options.confidence_factor,
            flatness_fraction: options.flatness_fraction,
        },
    )
    .map_err(Error::inversion)?;
    for m in &posterior.marginals {
        log::info!("invert: {} -> {:?}", m.name, m.distribution);
    }
    Ok(InversionReport {
        location_names: data
            .location_ids
            .iter()
            .map(|&k| surrogate.output_names()[k].clone())
            .collect(),
        parameters: names,
        measurements: data.clone(),
        log_likelihood_at_map: log_likelihood(map.ls_min, k, data.noise_std),
        map,
        sigma2_map: sigma2,
        laplace,
        rank_deficiencies,
        profiles,
        posterior,
    })
}

/// Validation of the surrogates `kind, w' = 0..=w` against fresh model runs
/// at uniform samples. Smaller grids reuse values of `surrogate` where
/// points coincide; missing points are evaluated and counted as grid runs.
fn validate_levels(
    stage: Stage,
    surrogate: &Surrogate,
    spec: GridSpec,
    samples: Vec<Vec<f64>>,
    seed: u64,
    model: &dyn Model,
) -> Result<(ValidationReport, usize)> {
    let known: HashMap<Vec<u64>, usize> = surrogate
        .grid()
        .points()
        .iter()
        .enumerate()
        .map(|(m, p)| (p.iter().map(|x| x.to_bits()).collect(), m))
        .collect();
    let mut extra = 0;
    let mut levels = Vec::new();
    let space = surrogate.grid().space().clone();
    let reference = model.evaluate_batch(&samples).map_err(|e| Error::model(stage, e))?;
    for w in 0..=spec.w {
        let sub = if w == spec.w {
            surrogate.clone()
        } else {
            let set = MultiIndexSet::generate(spec.kind, space.dim(), w).map_err(|e| Error::index_set(stage, e))?;
            let grid = SparseGrid::new(space.clone(), set).map_err(|e| Error::surrogate(stage, e))?;
            let mut rows = Vec::with_capacity(grid.len());
            let mut missing = Vec::new();
            for (i, p) in grid.points().iter().enumerate() {
                let key: Vec<u64> = p.iter().map(|x| x.to_bits()).collect();
                match known.get(&key) {
                    Some(&m) => rows.push(surrogate.values().iter().map(|row| row[m]).collect()),
                    None => {
                        missing.push(i);
                        rows.push(Vec::new());
                    }
                }
            }
            if !missing.is_empty() {
                let points: Vec<Vec<f64>> = missing.iter().map(|&i| grid.points()[i].clone()).collect();
                let fresh = model.evaluate_batch(&points).map_err(|e| Error::model(stage, e))?;
                extra += fresh.len();
                for (&i, r) in missing.iter().zip(fresh) {
                    rows[i] = r;
                }
            }
            Surrogate::from_point_rows(grid, surrogate.output_names().to_vec(), &rows)
                .map_err(|e| Error::surrogate(stage, e))?
        };
        let errors = validation_errors_from_values(&sub, &samples, &reference).map_err(|e| Error::surrogate(stage, e))?;
        log::info!(
            "{stage}: validation w={w}: {} points, max E_PPE {:.3e}, max E_MSE {:.3e}",
            sub.grid().len(),
            errors.max_e_ppe(),
            errors.max_e_mse()
        );
        levels.push(ValidationLevel {
            kind: spec.kind,
            w,
            points: sub.grid().len(),
            max_e_ppe: errors.max_e_ppe(),
            max_e_mse: errors.max_e_mse(),
            errors,
        });
    }
    Ok((
        ValidationReport {
            seed,
            output_names: surrogate.output_names().to_vec(),
            samples,
            levels,
        },
        extra,
    ))
}

/// Uniform draws from a box-bounded space.
pub fn uniform_samples(space: &ParameterSpace, n: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::Rng;
    let mut rng = sguq_core::rng(seed);
    (0..n)
        .map(|_| {
            space
                .params()
                .iter()
                .map(|p| match p.distribution {
                    Distribution::Uniform { a, b } => a + (b - a) * rng.random::<f64>(),
                    Distribution::Gaussian { mean, .. } => mean,
                })
                .collect()
        })
        .collect()
}

pub fn run_invert(config: &RunConfig, model: &dyn Model, dims: &[String], validate: bool) -> Result<InvertOutcome> {
    let space = stage_space(config, dims)?;
    let stage_model = StageModel::new(model, dims, config)?;
    let mut evaluations = Evaluations::default();

    let (data, target) = match &config.inversion.data_file {
        Some(path) => {
            let file: DataFile = read_json(path)?;
            let ids = resolve_outputs(model, &file.locations)?;
            let data = Measurements {
                location_ids: ids,
                values: file.values,
                noise_std: file.noise_std,
                seed: None,
                target: None,
            };
            data.validate().map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            (data, None)
        }
        None => {
            let ids = resolve_outputs(model, &config.inversion.locations)?;
            if ids.is_empty() {
                return Err(Error::Config("inversion.locations selects no outputs".into()));
            }
            let before = stage_model.evaluations();
            let (data, target) = synthesize(config, &stage_model, &space, &ids)?;
            evaluations.synthetic_data = stage_model.evaluations() - before;
            (data, Some(target))
        }
    };

    let before = stage_model.evaluations();
    let surrogate = build_surrogate(Stage::Invert, space.clone(), config.inversion.grid, &stage_model)?;
    evaluations.grid = stage_model.evaluations() - before;

    let validation = if validate {
        let before = stage_model.evaluations();
        let samples = uniform_samples(&space, config.inversion.validation_samples, config.inversion.validation_seed);
        let (report, extra) = validate_levels(
            Stage::Invert,
            &surrogate,
            config.inversion.grid,
            samples,
            config.inversion.validation_seed,
            &stage_model,
        )?;
        evaluations.grid += extra;
        evaluations.validation = stage_model.evaluations() - before - extra;
        Some(report)
    } else {
        None
    };

    let report = invert(&surrogate, &data, &config.inversion)?;
    Ok(InvertOutcome {
        fixed_inputs: stage_model.fixed_inputs(),
        surrogate,
        report,
        target,
        validation,
        evaluations,
    })
}

pub fn write_invert(dir: &Path, outcome: &InvertOutcome) -> Result<Vec<String>> {
    let mut files = Vec::new();
    write_grid_files(dir, Stage::Invert, &outcome.surrogate, &mut files)?;
    write_json(&dir.join(MEASUREMENTS_FILE), &outcome.report.measurements)?;
    files.push(format!("invert/{MEASUREMENTS_FILE}"));
    if let Some(t) = &outcome.target {
        write_json(&dir.join(TARGET_FILE), t)?;
        files.push(format!("invert/{TARGET_FILE}"));
    }
    if let Some(v) = &outcome.validation {
        write_json(&dir.join(VALIDATION_FILE), v)?;
        files.push(format!("invert/{VALIDATION_FILE}"));
    }
    write_json(&dir.join(REPORT_FILE), &outcome.report)?;
    files.push(format!("invert/{REPORT_FILE}"));
    write_json(&dir.join(POSTERIOR_FILE), &outcome.report.posterior)?;
    files.push(format!("invert/{POSTERIOR_FILE}"));
    Ok(files)
}

// ---------------------------------------------------------------- forward

/// What the forward stage reads from earlier stages.
#[derive(Debug, Clone)]
pub struct ForwardInputs {
    pub posterior: PosteriorSpec,
    pub prior_surrogate: Option<Surrogate>,
    pub target: Option<TargetRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySummary {
    pub bandwidth: f64,
    pub mode: f64,
    pub q05: f64,
    pub q95: f64,
    pub band_width: f64,
    pub grid_resolution: f64,
    pub integral: f64,
    pub degenerate: bool,
}

impl DensitySummary {
    fn of(d: &DensityEstimate) -> Self {
        Self {
            bandwidth: d.bandwidth,
            mode: d.mode,
            q05: d.q05,
            q95: d.q95,
            band_width: d.band_width(),
            grid_resolution: d.resolution(),
            integral: d.integral(),
            degenerate: d.degenerate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationSummary {
    pub location_id: usize,
    pub name: String,
    pub x: Option<f64>,
    pub prior: Option<DensitySummary>,
    pub posterior: DensitySummary,
    pub target_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardSummary {
    pub samples: usize,
    pub seed: u64,
    pub kde_grid: usize,
    pub kernel: String,
    pub bandwidth_rule: String,
    pub posterior: PosteriorSpec,
    pub locations: Vec<LocationSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationDensities {
    pub location_id: usize,
    pub name: String,
    pub prior: Option<DensityEstimate>,
    pub posterior: DensityEstimate,
}

pub struct ForwardOutcome {
    pub surrogate: Surrogate,
    pub outputs: Vec<usize>,
    pub posterior: Vec<DensityEstimate>,
    pub prior: Option<Vec<DensityEstimate>>,
    pub validation: Option<ValidationReport>,
    pub summary: ForwardSummary,
    pub rows: Vec<BandRow>,
    pub evaluations: Evaluations,
}

/// The uniform prior over the posterior's dimensions, as a posterior spec.
pub fn prior_spec(config: &RunConfig, dims: &[String]) -> Result<PosteriorSpec> {
    let space = stage_space(config, dims)?;
    PosteriorSpec::from_prior(&space).map_err(|e| Error::Config(e.to_string()))
}

pub fn run_forward(
    config: &RunConfig,
    model: &dyn Model,
    inputs: &ForwardInputs,
    validate: bool,
    compare_prior: bool,
) -> Result<ForwardOutcome> {
    let fwd = &config.forward;
    let dims: Vec<String> = inputs.posterior.marginals.iter().map(|m| m.name.clone()).collect();
    let stage_model = StageModel::new(model, &dims, config)?;
    let space = inputs
        .posterior
        .space()
        .map_err(|e| Error::Config(format!("posterior: {e}")))?;
    let outputs = if fwd.outputs.is_empty() {
        (0..model.output_names().len()).collect()
    } else {
        resolve_outputs(model, &fwd.outputs)?
    };
    let mut evaluations = Evaluations::default();
    let surrogate = build_surrogate(Stage::Forward, space, fwd.grid, &stage_model)?;
    evaluations.grid = stage_model.evaluations();

    log::info!("forward: propagating {} posterior samples through {} outputs", fwd.samples, outputs.len());
    let posterior = propagate_spec(&inputs.posterior, &surrogate, &outputs, fwd.samples, fwd.seed, fwd.kde_grid)
        .map_err(Error::forward)?;

    let prior = if compare_prior {
        let prior_surrogate = match &inputs.prior_surrogate {
            Some(s) => s.clone(),
            None => {
                let before = stage_model.evaluations();
                let s = build_surrogate(
                    Stage::Forward,
                    stage_space(config, &dims)?,
                    config.inversion.grid,
                    &stage_model,
                )?;
                evaluations.grid += stage_model.evaluations() - before;
                s
            }
        };
        let prior_names: Vec<&str> = prior_surrogate.grid().space().names().collect();
        if prior_names != dims.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::Config(format!(
                "prior surrogate dimensions {prior_names:?} differ from the posterior's {dims:?}"
            )));
        }
        let spec = PosteriorSpec::from_prior(prior_surrogate.grid().space())
            .map_err(|e| Error::Config(format!("prior surrogate: {e}")))?;
        let ids = outputs
            .iter()
            .map(|&k| {
                let name = &model.output_names()[k];
                prior_surrogate
                    .output_position(name)
                    .ok_or_else(|| Error::Config(format!("prior surrogate lacks output {name:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        log::info!("forward: propagating {} prior samples", fwd.samples);
        Some(
            propagate_spec(&spec, &prior_surrogate, &ids, fwd.samples, fwd.seed, fwd.kde_grid)
                .map_err(Error::forward)?,
        )
    } else {
        None
    };

    let validation = if validate {
        let before = stage_model.evaluations();
        let samples = sguq_core::forward::sample_posterior(&inputs.posterior, fwd.validation_samples, fwd.validation_seed)
            .map_err(Error::forward)?;
        let reference = stage_model.evaluate_batch(&samples).map_err(|e| Error::model(Stage::Forward, e))?;
        let selected = surrogate.select_outputs(&outputs);
        let reference: Vec<Vec<f64>> = reference
            .iter()
            .map(|r| outputs.iter().map(|&k| r[k]).collect())
            .collect();
        let errors = validation_errors_from_values(&selected, &samples, &reference)
            .map_err(|e| Error::surrogate(Stage::Forward, e))?;
        evaluations.validation = stage_model.evaluations() - before;
        log::info!(
            "forward: validation max E_PPE {:.3e}, max E_MSE {:.3e}",
            errors.max_e_ppe(),
            errors.max_e_mse()
        );
        Some(ValidationReport {
            seed: fwd.validation_seed,
            output_names: selected.output_names().to_vec(),
            samples,
            levels: vec![ValidationLevel {
                kind: fwd.grid.kind,
                w: fwd.grid.w,
                points: surrogate.grid().len(),
                max_e_ppe: errors.max_e_ppe(),
                max_e_mse: errors.max_e_mse(),
                errors,
            }],
        })
    } else {
        None
    };

    let coords = model.output_coordinates();
    let target_value = |k: usize| -> Option<f64> {
        let t = inputs.target.as_ref()?;
        let name = &model.output_names()[k];
        let pos = t.output_names.iter().position(|n| n == name)?;
        t.outputs.get(pos).copied()
    };
    let mut rows = Vec::with_capacity(outputs.len());
    let mut locations = Vec::with_capacity(outputs.len());
    for (i, &k) in outputs.iter().enumerate() {
        let post = &posterior[i];
        let pri = prior.as_ref().map(|p| &p[i]);
        let x = coords.map(|c| c[k]);
        rows.push(BandRow {
            location_id: k,
            x,
            prior: pri.map(|d| (d.mode, d.q05, d.q95)),
            posterior: (post.mode, post.q05, post.q95),
            target_value: target_value(k),
        });
        locations.push(LocationSummary {
            location_id: k,
            name: model.output_names()[k].clone(),
            x,
            prior: pri.map(DensitySummary::of),
            posterior: DensitySummary::of(post),
            target_value: target_value(k),
        });
    }
    Ok(ForwardOutcome {
        summary: ForwardSummary {
            samples: fwd.samples,
            seed: fwd.seed,
            kde_grid: fwd.kde_grid,
            kernel: "gaussian".into(),
            bandwidth_rule: "silverman".into(),
            posterior: inputs.posterior.clone(),
            locations,
        },
        surrogate,
        outputs,
        posterior,
        prior,
        validation,
        rows,
        evaluations,
    })
}

pub fn write_forward(dir: &Path, outcome: &ForwardOutcome, densities: bool, model: &dyn Model) -> Result<Vec<String>> {
    let mut files = Vec::new();
    write_grid_files(dir, Stage::Forward, &outcome.surrogate, &mut files)?;
    write_file(&dir.join(BANDS_FILE), band_csv(&outcome.rows).as_bytes())?;
    files.push(format!("forward/{BANDS_FILE}"));
    write_json(&dir.join(SUMMARY_FILE), &outcome.summary)?;
    files.push(format!("forward/{SUMMARY_FILE}"));
    if let Some(v) = &outcome.validation {
        write_json(&dir.join(VALIDATION_FILE), v)?;
        files.push(format!("forward/{VALIDATION_FILE}"));
    }
    if densities {
        let all: Vec<LocationDensities> = outcome
            .outputs
            .iter()
            .enumerate()
            .map(|(i, &k)| LocationDensities {
                location_id: k,
                name: model.output_names()[k].clone(),
                prior: outcome.prior.as_ref().map(|p| p[i].clone()),
                posterior: outcome.posterior[i].clone(),
            })
            .collect();
        write_json(&dir.join(DENSITIES_FILE), &all)?;
        files.push(format!("forward/{DENSITIES_FILE}"));
    }
    Ok(files)
}
