//! The JSON run configuration.
//!
//! Every field except `model` has a default; seeds default to 1. Relative
//! paths are resolved against the directory holding the config file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sguq_core::forward::{DEFAULT_GRID_SIZE, DEFAULT_SAMPLES};
use sguq_core::gsa::{Sampler, DEFAULT_SAMPLE_SIZE, DEFAULT_THRESHOLD};
use sguq_core::inversion::{
    FiniteDifferenceSteps, NelderMeadOptions, DEFAULT_CONFIDENCE_FACTOR, DEFAULT_FLATNESS_FRACTION,
    DEFAULT_PROFILE_POINTS, DEFAULT_STARTS,
};
use sguq_core::models::OutputGroup;
use sguq_core::multi_index::IndexSetKind;
use sguq_core::surrogate::{Distribution, Parameter};

use crate::error::{Error, Result};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_VALIDATION_SAMPLES: usize = 50;
pub const DEFAULT_TIMEOUT_SECONDS: f64 = 3600.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    /// Uncertain parameters. Defaults to uniform priors on a builtin's natural ranges.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameters: Option<Vec<Parameter>>,
    /// Values for model inputs that are not uncertain in a stage. Missing
    /// entries fall back to the parameter's prior mean.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fixed: BTreeMap<String, f64>,
    #[serde(default)]
    pub gsa: GsaConfig,
    #[serde(default)]
    pub inversion: InversionConfig,
    #[serde(default)]
    pub forward: ForwardConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Builtin {
        name: String,
    },
    /// A solver speaking the `params.csv` / `qoi.csv` protocol.
    External {
        command: Vec<String>,
        workdir: PathBuf,
        #[serde(default = "default_timeout")]
        timeout_seconds: f64,
        inputs: Vec<String>,
        outputs: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coordinates: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        groups: Vec<OutputGroup>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub kind: IndexSetKind,
    pub w: u32,
}

impl GridSpec {
    pub const fn new(kind: IndexSetKind, w: u32) -> Self {
        Self { kind, w }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GsaConfig {
    pub grid: GridSpec,
    pub sample_size: usize,
    pub seed: u64,
    pub sampler: Sampler,
    pub threshold: f64,
    /// Outputs (or output groups) left out of the keep/drop decision.
    pub exclude_outputs: Vec<String>,
}

impl Default for GsaConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::new(IndexSetKind::Max, 1),
            sample_size: DEFAULT_SAMPLE_SIZE,
            seed: DEFAULT_SEED,
            sampler: Sampler::Random,
            threshold: DEFAULT_THRESHOLD,
            exclude_outputs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InversionConfig {
    pub grid: GridSpec,
    /// Uncertain dimensions. When absent the GSA keep-list is used, either
    /// threaded by the pipeline or read from `gsa_result`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parameters: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gsa_result: Option<PathBuf>,
    /// Measured outputs, by output or group name.
    pub locations: Vec<String>,
    pub noise_std: f64,
    /// Synthetic-data target, by parameter name.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<BTreeMap<String, f64>>,
    pub noise_seed: u64,
    /// Measured data; replaces synthesis from `target`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_file: Option<PathBuf>,
    pub n_starts: usize,
    pub seed: u64,
    pub nelder_mead: NelderMeadOptions,
    pub fd_steps: FiniteDifferenceSteps,
    pub confidence_factor: f64,
    pub flatness_fraction: f64,
    pub profile_points: usize,
    pub validation_samples: usize,
    pub validation_seed: u64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::new(IndexSetKind::Sum, 3),
            parameters: None,
            gsa_result: None,
            locations: Vec::new(),
            noise_std: 0.01,
            target: None,
            noise_seed: DEFAULT_SEED,
            data_file: None,
            n_starts: DEFAULT_STARTS,
            seed: DEFAULT_SEED,
            nelder_mead: NelderMeadOptions::default(),
            fd_steps: FiniteDifferenceSteps::default(),
            confidence_factor: DEFAULT_CONFIDENCE_FACTOR,
            flatness_fraction: DEFAULT_FLATNESS_FRACTION,
            profile_points: DEFAULT_PROFILE_POINTS,
            validation_samples: DEFAULT_VALIDATION_SAMPLES,
            validation_seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForwardConfig {
    pub grid: GridSpec,
    /// Propagated outputs, by output or group name; empty means all outputs.
    pub outputs: Vec<String>,
    pub samples: usize,
    pub seed: u64,
    pub kde_grid: usize,
    /// Also write full densities as JSON.
    pub densities: bool,
    /// Serialized posterior from the invert stage.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub posterior: Option<PathBuf>,
    /// Propagate the prior instead of a posterior file.
    pub prior_only: bool,
    /// Prior-stage surrogate reused by `--compare-prior`; built afresh when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prior_surrogate: Option<PathBuf>,
    /// Model outputs at the synthetic target, for the band file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_file: Option<PathBuf>,
    pub validation_samples: usize,
    pub validation_seed: u64,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::new(IndexSetKind::Sum, 3),
            outputs: Vec::new(),
            samples: DEFAULT_SAMPLES,
            seed: DEFAULT_SEED,
            kde_grid: DEFAULT_GRID_SIZE,
            densities: false,
            posterior: None,
            prior_only: false,
            prior_surrogate: None,
            target_file: None,
            validation_samples: DEFAULT_VALIDATION_SAMPLES,
            validation_seed: DEFAULT_SEED + 1,
        }
    }
}

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_SECONDS
}

/// A parsed config plus the raw bytes it came from (for the manifest hash).
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub path: PathBuf,
    pub bytes: Vec<u8>,
}

impl LoadedConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: RunConfig = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(Self {
            config,
            path: path.to_path_buf(),
            bytes,
        })
    }

    /// Wraps an in-memory config; relative paths stay relative to the working directory.
    pub fn from_config(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let bytes = serde_json::to_vec_pretty(&config).expect("config serializes");
        Ok(Self {
            config,
            path: PathBuf::from("<memory>"),
            bytes,
        })
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let ModelSpec::External { workdir, .. } = &mut self.model {
            fix(workdir);
        }
        for p in [
            &mut self.inversion.gsa_result,
            &mut self.inversion.data_file,
            &mut self.forward.posterior,
            &mut self.forward.prior_surrogate,
            &mut self.forward.target_file,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    /// Checks everything that can be checked without running the model.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match &self.model {
            ModelSpec::Builtin { name } => {
                if !sguq_core::models::BUILTIN_NAMES.contains(&name.as_str()) {
                    return bad(format!(
                        "unknown builtin model {name:?}; expected one of {:?}",
                        sguq_core::models::BUILTIN_NAMES
                    ));
                }
            }
            ModelSpec::External {
                command,
                timeout_seconds,
                inputs,
                outputs,
                coordinates,
                groups,
                ..
            } => {
                if command.is_empty() {
                    return bad("model.command is empty".into());
                }
                if !(*timeout_seconds > 0.0) {
                    return bad(format!("model.timeout_seconds must be positive, got {timeout_seconds}"));
                }
                if inputs.is_empty() || outputs.is_empty() {
                    return bad("external model needs at least one input and one output".into());
                }
                check_unique("model.inputs", inputs)?;
                check_unique("model.outputs", outputs)?;
                if let Some(c) = coordinates {
                    if c.len() != outputs.len() {
                        return bad(format!(
                            "model.coordinates has {} entries for {} outputs",
                            c.len(),
                            outputs.len()
                        ));
                    }
                }
                if let Some(g) = groups.iter().find(|g| g.start + g.len > outputs.len()) {
                    return bad(format!("output group {:?} runs past the last output", g.name));
                }
                if self.parameters.is_none() {
                    return bad("an external model needs an explicit \"parameters\" list".into());
                }
            }
        }
        if let Some(params) = &self.parameters {
            if params.is_empty() {
                return bad("\"parameters\" is empty".into());
            }
            let names: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
            check_unique("parameters", &names)?;
            for p in params {
                let ok = match p.distribution {
                    Distribution::Uniform { a, b } => a < b && a.is_finite() && b.is_finite(),
                    Distribution::Gaussian { mean, std } => std > 0.0 && mean.is_finite() && std.is_finite(),
                };
                if !ok {
                    return bad(format!("parameter {:?} has an invalid distribution", p.name));
                }
            }
        }
        for (what, grid) in [
            ("gsa.grid", self.gsa.grid),
            ("inversion.grid", self.inversion.grid),
            ("forward.grid", self.forward.grid),
        ] {
            if grid.kind == IndexSetKind::Explicit {
                return bad(format!("{what}.kind must be \"sum\" or \"max\""));
            }
        }
        if !(self.gsa.threshold > 0.0 && self.gsa.threshold < 1.0) {
            return bad(format!("gsa.threshold must lie in (0, 1), got {}", self.gsa.threshold));
        }
        if self.gsa.sample_size < sguq_core::gsa::MIN_SAMPLE_SIZE {
            return bad(format!(
                "gsa.sample_size must be at least {}",
                sguq_core::gsa::MIN_SAMPLE_SIZE
            ));
        }
        let inv = &self.inversion;
        if !(inv.noise_std > 0.0) {
            return bad(format!("inversion.noise_std must be positive, got {}", inv.noise_std));
        }
        if inv.n_starts < sguq_core::inversion::MIN_STARTS {
            return bad(format!(
                "inversion.n_starts must be at least {}",
                sguq_core::inversion::MIN_STARTS
            ));
        }
        if inv.profile_points < sguq_core::inversion::MIN_PROFILE_POINTS {
            return bad(format!(
                "inversion.profile_points must be at least {}",
                sguq_core::inversion::MIN_PROFILE_POINTS
            ));
        }
        if !(inv.confidence_factor > 0.0) || !(inv.flatness_fraction > 0.0 && inv.flatness_fraction < 1.0) {
            return bad("inversion.confidence_factor must be positive and flatness_fraction in (0, 1)".into());
        }
        if !(inv.fd_steps.jacobian > 0.0 && inv.fd_steps.hessian > 0.0) {
            return bad("inversion.fd_steps must be positive".into());
        }
        if inv.validation_samples == 0 || self.forward.validation_samples == 0 {
            return bad("validation sample counts must be positive".into());
        }
        if self.forward.samples < sguq_core::forward::MIN_DENSITY_VALUES {
            return bad(format!(
                "forward.samples must be at least {}",
                sguq_core::forward::MIN_DENSITY_VALUES
            ));
        }
        if self.forward.kde_grid < 2 {
            return bad("forward.kde_grid must be at least 2".into());
        }
        Ok(())
    }
}

fn check_unique(what: &str, names: &[String]) -> Result<()> {
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(Error::Config(format!("{what}: duplicate name {n:?}")));
        }
    }
    Ok(())
}
