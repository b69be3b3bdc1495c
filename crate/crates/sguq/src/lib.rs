//! Workflow layer over `sguq-core`: JSON configs and file formats, the
//! external-solver adapter, stage runners, run manifests and the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod external;
pub mod formats;
pub mod run;
pub mod stages;

pub use error::{Error, Result, Stage};
pub use sguq_core;
