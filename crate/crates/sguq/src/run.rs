//! Run directories, manifests and the stage sequencing behind each subcommand.

use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sguq_core::inversion::PosteriorSpec;
use sguq_core::models::Model;

use crate::config::{LoadedConfig, RunConfig};
use crate::error::{Error, Result, Stage};
use crate::evaluation::open_model;
use crate::formats::{read_json, read_surrogate, write_json};
use crate::stages::{
    inversion_dims, prior_spec, run_forward, run_gsa, run_invert, write_forward, write_gsa, write_invert,
    Evaluations, ForwardInputs, TargetRecord, POSTERIOR_FILE, SURROGATE_FILE, TARGET_FILE,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ERROR_FILE: &str = "error.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Gsa,
    Invert,
    Forward,
    Pipeline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub command: Command,
    pub validate: bool,
    pub compare_prior: bool,
    /// Run directory; `run/<timestamp>` when absent.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub grid_points: usize,
    pub evaluations: Evaluations,
    /// Grid and validation runs; the synthetic-data run is counted separately.
    pub model_evaluations: usize,
    pub settings: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub config_path: String,
    pub config_sha256: String,
    pub validate: bool,
    pub compare_prior: bool,
    pub started: String,
    pub finished: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub stages: Vec<StageRecord>,
    pub grid_evaluations: usize,
    pub validation_evaluations: usize,
    /// `grid_evaluations + validation_evaluations`.
    pub model_evaluations: usize,
    pub synthetic_data_evaluations: usize,
}

impl Manifest {
    fn new(loaded: &LoadedConfig, options: &RunOptions) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: options.command,
            config_path: loaded.path.display().to_string(),
            config_sha256: sha256_hex(&loaded.bytes),
            validate: options.validate,
            compare_prior: options.compare_prior,
            started: now(),
            finished: String::new(),
            status: "running".into(),
            error: None,
            stages: Vec::new(),
            grid_evaluations: 0,
            validation_evaluations: 0,
            model_evaluations: 0,
            synthetic_data_evaluations: 0,
        }
    }

    fn push(&mut self, record: StageRecord) {
        self.grid_evaluations += record.evaluations.grid;
        self.validation_evaluations += record.evaluations.validation;
        self.model_evaluations += record.model_evaluations;
        self.synthetic_data_evaluations += record.evaluations.synthetic_data;
        log::info!(
            "{}: {} model evaluations ({} grid, {} validation); run total {}",
            record.name,
            record.model_evaluations,
            record.evaluations.grid,
            record.evaluations.validation,
            self.model_evaluations
        );
        self.stages.push(record);
    }
}

fn record(
    stage: Stage,
    inputs: Vec<String>,
    outputs: Vec<String>,
    grid_points: usize,
    evaluations: Evaluations,
    settings: serde_json::Value,
) -> StageRecord {
    StageRecord {
        name: stage.dir_name().into(),
        inputs,
        outputs,
        grid_points,
        model_evaluations: evaluations.grid + evaluations.validation,
        evaluations,
        settings,
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// `run/<UTC timestamp>` under the working directory.
pub fn default_run_dir() -> PathBuf {
    PathBuf::from("run").join(Utc::now().format("%Y%m%dT%H%M%S%.3fZ").to_string())
}

/// Runs a subcommand and writes its files and manifest under the run
/// directory. On failure the completed stages' files stay in place, the
/// manifest records the error and the failing stage gets an error report.
pub fn execute(loaded: &LoadedConfig, options: &RunOptions) -> Result<(PathBuf, Manifest)> {
    let out = options.out.clone().unwrap_or_else(default_run_dir);
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut manifest = Manifest::new(loaded, options);
    let result = execute_stages(&loaded.config, options, &out, &mut manifest);
    manifest.finished = now();
    match &result {
        Ok(()) => manifest.status = "ok".into(),
        Err(e) => {
            manifest.status = "failed".into();
            manifest.error = Some(e.to_string());
            if let Some(stage) = e.stage() {
                let details = match e {
                    Error::Numerical { details, .. } => details.clone(),
                    other => format!("{other:?}"),
                };
                let report = serde_json::json!({
                    "stage": stage.dir_name(),
                    "exit_code": e.exit_code(),
                    "message": e.to_string(),
                    "details": details,
                });
                write_json(&out.join(stage.dir_name()).join(ERROR_FILE), &report)?;
            }
        }
    }
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    result.map(|()| (out, manifest))
}

fn execute_stages(config: &RunConfig, options: &RunOptions, out: &Path, manifest: &mut Manifest) -> Result<()> {
    let model = open_model(&config.model)?;
    let model = model.as_ref();
    match options.command {
        Command::Gsa => {
            gsa_stage(config, model, out, manifest)?;
        }
        Command::Invert => {
            let dims = inversion_dims(config, None)?;
            let mut inputs = Vec::new();
            if config.inversion.parameters.is_none() {
                inputs.extend(config.inversion.gsa_result.iter().map(|p| p.display().to_string()));
            }
            invert_stage(config, model, &dims, inputs, options.validate, out, manifest)?;
        }
        Command::Forward => {
            let (posterior, mut inputs) = match (&config.forward.posterior, config.forward.prior_only) {
                (Some(path), false) => (read_json::<PosteriorSpec>(path)?, vec![path.display().to_string()]),
                (None, true) => {
                    let dims = inversion_dims(config, None)?;
                    (prior_spec(config, &dims)?, Vec::new())
                }
                (Some(_), true) => {
                    return Err(Error::Config(
                        "forward.posterior and forward.prior_only are mutually exclusive".into(),
                    ))
                }
                (None, false) => {
                    return Err(Error::Config(
                        "forward needs \"forward.posterior\" or \"forward.prior_only\": true".into(),
                    ))
                }
            };
            let prior_surrogate = match (&config.forward.prior_surrogate, options.compare_prior) {
                (Some(path), true) => {
                    inputs.push(path.display().to_string());
                    Some(read_surrogate(path)?)
                }
                _ => None,
            };
            let target = match &config.forward.target_file {
                Some(path) => {
                    inputs.push(path.display().to_string());
                    Some(read_json::<TargetRecord>(path)?)
                }
                None => None,
            };
            let fi = ForwardInputs {
                posterior,
                prior_surrogate,
                target,
            };
            forward_stage(config, model, &fi, inputs, options, out, manifest)?;
        }
        Command::Pipeline => {
            let keep = gsa_stage(config, model, out, manifest)?;
            let dims = inversion_dims(config, Some(&keep))?;
            let gsa_input = vec![format!("gsa/{}", crate::stages::SOBOL_FILE)];
            invert_stage(config, model, &dims, gsa_input, options.validate, out, manifest)?;
            // the forward stage sees only what the invert stage wrote
            let invert_dir = out.join(Stage::Invert.dir_name());
            let mut inputs = vec![format!("invert/{POSTERIOR_FILE}")];
            let posterior: PosteriorSpec = read_json(&invert_dir.join(POSTERIOR_FILE))?;
            let prior_surrogate = if options.compare_prior {
                inputs.push(format!("invert/{SURROGATE_FILE}"));
                Some(read_surrogate(&invert_dir.join(SURROGATE_FILE))?)
            } else {
                None
            };
            let target_path = invert_dir.join(TARGET_FILE);
            let target = if target_path.exists() {
                inputs.push(format!("invert/{TARGET_FILE}"));
                Some(read_json::<TargetRecord>(&target_path)?)
            } else {
                None
            };
            let fi = ForwardInputs {
                posterior,
                prior_surrogate,
                target,
            };
            forward_stage(config, model, &fi, inputs, options, out, manifest)?;
        }
    }
    Ok(())
}

fn gsa_stage(config: &RunConfig, model: &dyn Model, out: &Path, manifest: &mut Manifest) -> Result<Vec<String>> {
    log::info!("gsa: starting");
    let outcome = run_gsa(config, model)?;
    let files = write_gsa(&out.join(Stage::Gsa.dir_name()), &outcome)?;
    manifest.push(record(
        Stage::Gsa,
        Vec::new(),
        files,
        outcome.surrogate.grid().len(),
        outcome.evaluations,
        serde_json::json!({
            "grid": config.gsa.grid,
            "sample_size": config.gsa.sample_size,
            "seed": config.gsa.seed,
            "sampler": config.gsa.sampler,
            "threshold": config.gsa.threshold,
        }),
    ));
    Ok(outcome.report.keep)
}

fn invert_stage(
    config: &RunConfig,
    model: &dyn Model,
    dims: &[String],
    inputs: Vec<String>,
    validate: bool,
    out: &Path,
    manifest: &mut Manifest,
) -> Result<()> {
    log::info!("invert: starting over {dims:?}");
    let mut inputs = inputs;
    inputs.extend(config.inversion.data_file.iter().map(|p| p.display().to_string()));
    let outcome = run_invert(config, model, dims, validate)?;
    let files = write_invert(&out.join(Stage::Invert.dir_name()), &outcome)?;
    let inv = &config.inversion;
    manifest.push(record(
        Stage::Invert,
        inputs,
        files,
        outcome.surrogate.grid().len(),
        outcome.evaluations,
        serde_json::json!({
            "parameters": dims,
            "fixed_inputs": outcome.fixed_inputs,
            "grid": inv.grid,
            "noise_std": inv.noise_std,
            "noise_seed": inv.noise_seed,
            "n_starts": inv.n_starts,
            "seed": inv.seed,
            "validation_samples": if validate { inv.validation_samples } else { 0 },
            "validation_seed": inv.validation_seed,
        }),
    ));
    Ok(())
}

fn forward_stage(
    config: &RunConfig,
    model: &dyn Model,
    inputs: &ForwardInputs,
    input_files: Vec<String>,
    options: &RunOptions,
    out: &Path,
    manifest: &mut Manifest,
) -> Result<()> {
    log::info!("forward: starting");
    let outcome = run_forward(config, model, inputs, options.validate, options.compare_prior)?;
    let files = write_forward(
        &out.join(Stage::Forward.dir_name()),
        &outcome,
        config.forward.densities,
        model,
    )?;
    let fwd = &config.forward;
    manifest.push(record(
        Stage::Forward,
        input_files,
        files,
        outcome.surrogate.grid().len(),
        outcome.evaluations,
        serde_json::json!({
            "grid": fwd.grid,
            "samples": fwd.samples,
            "seed": fwd.seed,
            "kde_grid": fwd.kde_grid,
            "compare_prior": options.compare_prior,
            "validation_samples": if options.validate { fwd.validation_samples } else { 0 },
            "validation_seed": fwd.validation_seed,
        }),
    ));
    Ok(())
}
