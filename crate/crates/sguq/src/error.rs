use std::fmt;
use std::io;
use std::path::PathBuf;

use sguq_core::forward::ForwardError;
use sguq_core::gsa::GsaError;
use sguq_core::inversion::InversionError;
use sguq_core::models::ModelError;
use sguq_core::multi_index::MultiIndexError;
use sguq_core::surrogate::SurrogateError;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Gsa,
    Invert,
    Forward,
}

impl Stage {
    pub fn dir_name(self) -> &'static str {
        match self {
            Stage::Gsa => "gsa",
            Stage::Invert => "invert",
            Stage::Forward => "forward",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("{stage} stage: model error: {source}")]
    Model {
        stage: Stage,
        #[source]
        source: ModelError,
    },
    #[error("{stage} stage: numerical failure: {message}")]
    Numerical {
        stage: Stage,
        message: String,
        /// Debug rendering of the underlying error, written to the stage's error report.
        details: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit code: 2 config, 3 model or protocol, 4 numerical, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Model { .. } => 3,
            Error::Numerical { .. } => 4,
            Error::Io { .. } => 1,
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Model { stage, .. } | Error::Numerical { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn numerical(stage: Stage, error: impl fmt::Debug + fmt::Display) -> Self {
        Error::Numerical {
            stage,
            message: error.to_string(),
            details: format!("{error:?}"),
        }
    }

    pub(crate) fn model(stage: Stage, source: ModelError) -> Self {
        Error::Model { stage, source }
    }

    pub(crate) fn surrogate(stage: Stage, e: SurrogateError) -> Self {
        match e {
            SurrogateError::Model(m) => Error::model(stage, m),
            other => Error::numerical(stage, other),
        }
    }

    pub(crate) fn index_set(stage: Stage, e: MultiIndexError) -> Self {
        Error::numerical(stage, e)
    }

    pub(crate) fn gsa(e: GsaError) -> Self {
        match e {
            GsaError::Surrogate(s) => Error::surrogate(Stage::Gsa, s),
            other => Error::numerical(Stage::Gsa, other),
        }
    }

    pub(crate) fn inversion(e: InversionError) -> Self {
        match e {
            InversionError::Model(m) => Error::model(Stage::Invert, m),
            InversionError::Surrogate(s) => Error::surrogate(Stage::Invert, s),
            other => Error::numerical(Stage::Invert, other),
        }
    }

    pub(crate) fn forward(e: ForwardError) -> Self {
        match e {
            ForwardError::Evaluation { source, .. } => Error::surrogate(Stage::Forward, source),
            other => Error::numerical(Stage::Forward, other),
        }
    }
}
