//! Model handles and the per-stage view of a model over a parameter subspace.

use std::cell::Cell;

use sguq_core::models::{builtin, Model, ModelError, OutputGroup};
use sguq_core::surrogate::{Distribution, Parameter};

use crate::config::{ModelSpec, RunConfig};
use crate::error::{Error, Result};
use crate::external::ExternalModel;

/// Instantiates the configured model.
pub fn open_model(spec: &ModelSpec) -> Result<Box<dyn Model>> {
    match spec {
        ModelSpec::Builtin { name } => builtin(name)
            .map(|m| Box::new(m) as Box<dyn Model>)
            .map_err(|e| Error::Config(e.to_string())),
        ModelSpec::External {
            command,
            workdir,
            timeout_seconds,
            inputs,
            outputs,
            coordinates,
            groups,
        } => Ok(Box::new(
            ExternalModel::new(
                command.clone(),
                workdir.clone(),
                *timeout_seconds,
                inputs.clone(),
                outputs.clone(),
            )
            .with_coordinates(coordinates.clone())
            .with_groups(groups.clone()),
        )),
    }
}

/// The configured uncertain parameters, defaulting to uniform priors on a
/// builtin's natural ranges.
pub fn parameters(config: &RunConfig) -> Result<Vec<Parameter>> {
    if let Some(p) = &config.parameters {
        return Ok(p.clone());
    }
    match &config.model {
        ModelSpec::Builtin { name } => {
            let m = builtin(name).map_err(|e| Error::Config(e.to_string()))?;
            Ok(m.input_names()
                .iter()
                .zip(m.default_ranges())
                .map(|(n, &(a, b))| Parameter {
                    name: n.clone(),
                    distribution: Distribution::Uniform { a, b },
                })
                .collect())
        }
        ModelSpec::External { .. } => Err(Error::Config("external models need \"parameters\"".into())),
    }
}

/// Output indices named by a list of output and group names, in list order.
pub fn resolve_outputs(model: &dyn Model, names: &[String]) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for name in names {
        if let Some(k) = model.output_names().iter().position(|o| o == name) {
            out.push(k);
        } else if let Some(g) = model.output_groups().iter().find(|g| &g.name == name) {
            out.extend(g.range());
        } else {
            return Err(Error::Config(format!("no output or output group named {name:?}")));
        }
    }
    for (i, k) in out.iter().enumerate() {
        if out[..i].contains(k) {
            return Err(Error::Config(format!(
                "output {:?} is selected twice",
                model.output_names()[*k]
            )));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Source {
    Dim(usize),
    Fixed(f64),
}

/// A model seen as a function of one stage's uncertain dimensions: each
/// model input comes from a stage dimension or from a fixed value. Counts
/// every evaluation.
pub struct StageModel<'a> {
    inner: &'a dyn Model,
    names: Vec<String>,
    sources: Vec<Source>,
    evaluations: Cell<usize>,
}

impl<'a> StageModel<'a> {
    /// `dims` are the stage's parameter names. Inputs not among them take
    /// `config.fixed[name]`, else the configured prior mean.
    pub fn new(inner: &'a dyn Model, dims: &[String], config: &RunConfig) -> Result<Self> {
        let params = parameters(config)?;
        let mut sources = Vec::with_capacity(inner.input_names().len());
        for input in inner.input_names() {
            let source = if let Some(n) = dims.iter().position(|d| d == input) {
                Source::Dim(n)
            } else if let Some(&x) = config.fixed.get(input) {
                Source::Fixed(x)
            } else if let Some(p) = params.iter().find(|p| &p.name == input) {
                Source::Fixed(p.distribution.mean())
            } else {
                return Err(Error::Config(format!(
                    "model input {input:?} is neither a parameter nor given in \"fixed\""
                )));
            };
            sources.push(source);
        }
        for d in dims {
            if !inner.input_names().contains(d) {
                log::warn!("parameter {d:?} is not a model input; the model does not depend on it");
            }
        }
        Ok(Self {
            inner,
            names: dims.to_vec(),
            sources,
            evaluations: Cell::new(0),
        })
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations.get()
    }

    /// Values used for inputs that are not stage dimensions, by input name.
    pub fn fixed_inputs(&self) -> Vec<(String, f64)> {
        self.inner
            .input_names()
            .iter()
            .zip(&self.sources)
            .filter_map(|(n, s)| match s {
                Source::Fixed(x) => Some((n.clone(), *x)),
                Source::Dim(_) => None,
            })
            .collect()
    }
}

impl Model for StageModel<'_> {
    fn input_names(&self) -> &[String] {
        &self.names
    }

    fn output_names(&self) -> &[String] {
        self.inner.output_names()
    }

    fn output_coordinates(&self) -> Option<&[f64]> {
        self.inner.output_coordinates()
    }

    fn output_groups(&self) -> &[OutputGroup] {
        self.inner.output_groups()
    }

    fn evaluate_batch(&self, batch: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ModelError> {
        let mapped = batch
            .iter()
            .enumerate()
            .map(|(sample, v)| {
                if v.len() != self.names.len() {
                    return Err(ModelError::DimensionMismatch {
                        sample,
                        expected: self.names.len(),
                        got: v.len(),
                    });
                }
                Ok(self
                    .sources
                    .iter()
                    .map(|s| match *s {
                        Source::Dim(n) => v[n],
                        Source::Fixed(x) => x,
                    })
                    .collect())
            })
            .collect::<Result<Vec<Vec<f64>>, _>>()?;
        self.evaluations.set(self.evaluations.get() + batch.len());
        let rows = self.inner.evaluate_batch(&mapped)?;
        if rows.len() != batch.len() {
            return Err(ModelError::RowCountMismatch {
                batch: 0,
                expected: batch.len(),
                got: rows.len(),
            });
        }
        Ok(rows)
    }
}
