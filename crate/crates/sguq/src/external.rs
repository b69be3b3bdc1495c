//! File-exchange adapter for external solvers.
//!
//! Each batch writes `<workdir>/params.csv` (header of input names, one row
//! per sample), runs `<command> <workdir>/params.csv <workdir>/qoi.csv` and
//! reads `qoi.csv` (header of output names, one row per input row). Batches
//! on one handle never overlap.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use sguq_core::models::{Model, ModelError, OutputGroup};
use wait_timeout::ChildExt;

use crate::formats::fmt_f64;

pub const REQUEST_FILE: &str = "params.csv";
pub const RESPONSE_FILE: &str = "qoi.csv";

#[derive(Debug)]
pub struct ExternalModel {
    command: Vec<String>,
    workdir: PathBuf,
    timeout: Duration,
    inputs: Vec<String>,
    outputs: Vec<String>,
    coordinates: Option<Vec<f64>>,
    groups: Vec<OutputGroup>,
    /// Serializes batches; holds the next batch number.
    next_batch: Mutex<usize>,
}

impl ExternalModel {
    pub fn new(
        command: Vec<String>,
        workdir: PathBuf,
        timeout_seconds: f64,
        inputs: Vec<String>,
        outputs: Vec<String>,
    ) -> Self {
        Self {
            command,
            workdir,
            timeout: Duration::from_secs_f64(timeout_seconds),
            inputs,
            outputs,
            coordinates: None,
            groups: Vec::new(),
            next_batch: Mutex::new(0),
        }
    }

    pub fn with_coordinates(mut self, coordinates: Option<Vec<f64>>) -> Self {
        self.coordinates = coordinates;
        self
    }

    pub fn with_groups(mut self, groups: Vec<OutputGroup>) -> Self {
        self.groups = groups;
        self
    }

    pub fn workdir(&self) -> &Path {
        &self.workdir
    }

    fn run(&self, batch_id: usize, batch: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ModelError> {
        let io = |message: String| ModelError::Io {
            batch: batch_id,
            message,
        };
        fs::create_dir_all(&self.workdir).map_err(|e| io(format!("{}: {e}", self.workdir.display())))?;
        let request = self.workdir.join(REQUEST_FILE);
        let response = self.workdir.join(RESPONSE_FILE);
        if response.exists() {
            fs::remove_file(&response).map_err(|e| io(format!("{}: {e}", response.display())))?;
        }
        fs::write(&request, write_table(&self.inputs, batch))
            .map_err(|e| io(format!("{}: {e}", request.display())))?;

        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .arg(&request)
            .arg(&response)
            .current_dir(&self.workdir)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| io(format!("cannot start {:?}: {e}", self.command[0])))?;
        // drain stderr concurrently so a chatty solver cannot block on a full pipe
        let mut stderr = child.stderr.take().expect("stderr is piped");
        let reader = thread::spawn(move || {
            let mut text = String::new();
            let _ = stderr.read_to_string(&mut text);
            text
        });
        let status = match child.wait_timeout(self.timeout).map_err(|e| io(e.to_string()))? {
            Some(status) => status,
            None => {
                let _ = child.kill();
                let _ = child.wait();
                // grandchildren may still hold stderr open; leave the reader behind
                drop(reader);
                return Err(ModelError::Timeout {
                    batch: batch_id,
                    seconds: self.timeout.as_secs_f64(),
                });
            }
        };
        let stderr = reader.join().unwrap_or_default();
        if !status.success() {
            return Err(ModelError::NonZeroExit {
                batch: batch_id,
                status: status.to_string(),
                stderr: stderr.trim().to_string(),
            });
        }
        let text = fs::read_to_string(&response).map_err(|e| ModelError::MalformedResponse {
            batch: batch_id,
            reason: format!("cannot read {}: {e}", response.display()),
        })?;
        let rows = read_table(&text, &self.outputs).map_err(|reason| ModelError::MalformedResponse {
            batch: batch_id,
            reason,
        })?;
        if rows.len() != batch.len() {
            return Err(ModelError::RowCountMismatch {
                batch: batch_id,
                expected: batch.len(),
                got: rows.len(),
            });
        }
        Ok(rows)
    }
}

impl Model for ExternalModel {
    fn input_names(&self) -> &[String] {
        &self.inputs
    }

    fn output_names(&self) -> &[String] {
        &self.outputs
    }

    fn output_coordinates(&self) -> Option<&[f64]> {
        self.coordinates.as_deref()
    }

    fn output_groups(&self) -> &[OutputGroup] {
        &self.groups
    }

    fn evaluate_batch(&self, batch: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ModelError> {
        for (sample, v) in batch.iter().enumerate() {
            if v.len() != self.inputs.len() {
                return Err(ModelError::DimensionMismatch {
                    sample,
                    expected: self.inputs.len(),
                    got: v.len(),
                });
            }
        }
        let mut next = self.next_batch.lock().unwrap_or_else(|p| p.into_inner());
        let id = *next;
        *next += 1;
        log::debug!("external batch {id}: {} samples", batch.len());
        self.run(id, batch)
    }
}

/// Header row plus one 17-significant-digit row per sample.
pub fn write_table(names: &[String], rows: &[Vec<f64>]) -> String {
    let mut out = names.join(",");
    out.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(|&x| fmt_f64(x)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Parses a table whose header must equal `expected` exactly.
pub fn read_table(text: &str, expected: &[String]) -> Result<Vec<Vec<f64>>, String> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| format!("header: {e}"))?.clone();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(format!(
            "header {:?} does not match expected columns {expected:?}",
            header.iter().collect::<Vec<_>>()
        ));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format!("row {i}: {e}"))?;
        let row = record
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                cell.parse::<f64>()
                    .map_err(|_| format!("row {i}, column {:?}: not a number: {cell:?}", expected[j]))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Reads a request table whose columns may come in any order, returning rows
/// in `inputs` order.
pub fn read_request(text: &str, inputs: &[String]) -> Result<Vec<Vec<f64>>, String> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| format!("header: {e}"))?
        .iter()
        .map(String::from)
        .collect();
    let columns = inputs
        .iter()
        .map(|name| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| format!("request lacks column {name:?}"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rows = read_table(text, &header)?;
    Ok(rows
        .into_iter()
        .map(|r| columns.iter().map(|&c| r[c]).collect())
        .collect())
}

/// Body of the hidden `builtin-solver` subcommand: answers one request with a builtin model.
pub fn serve_builtin(name: &str, request: &Path, response: &Path) -> Result<(), String> {
    let model = sguq_core::models::builtin(name).map_err(|e| e.to_string())?;
    let text = fs::read_to_string(request).map_err(|e| format!("{}: {e}", request.display()))?;
    let rows = read_request(&text, model.input_names())?;
    let out = model.evaluate_batch(&rows).map_err(|e| e.to_string())?;
    fs::write(response, write_table(model.output_names(), &out))
        .map_err(|e| format!("{}: {e}", response.display()))
}
