//! On-disk formats: multi-index sets, surrogates, band tables and JSON helpers.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sguq_core::multi_index::{IndexSetKind, MultiIndex, MultiIndexError, MultiIndexSet};
use sguq_core::surrogate::{ParameterSpace, SparseGrid, Surrogate, SurrogateError};

use crate::error::{Error, Result};

/// Fixed 17-significant-digit rendering used for CSV files.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Pretty JSON with a trailing newline. serde_json prints the shortest
/// representation that parses back to the same `f64`, so output is
/// deterministic and lossless.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("output types serialize");
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Reads a JSON input file; failures are config errors.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// `{"kind", "w", "N", "indices", "coefficients"}` with parallel arrays in
/// lexicographic index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSetFile {
    pub kind: IndexSetKind,
    pub w: u32,
    #[serde(rename = "N")]
    pub n: usize,
    pub indices: Vec<Vec<u32>>,
    pub coefficients: Vec<i64>,
}

impl IndexSetFile {
    pub fn from_set(set: &MultiIndexSet) -> Result<Self, MultiIndexError> {
        let c = set.combination_coefficients()?;
        Ok(Self {
            kind: set.kind(),
            w: set.w(),
            n: set.dim(),
            indices: c.indices().iter().map(|i| i.levels().to_vec()).collect(),
            coefficients: c.values().to_vec(),
        })
    }

    /// Rebuilds the set and checks the stored coefficients against it.
    pub fn to_set(&self) -> Result<MultiIndexSet, String> {
        let set = match self.kind {
            IndexSetKind::Explicit => {
                let indices = self
                    .indices
                    .iter()
                    .map(|l| MultiIndex::new(l.clone()))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| e.to_string())?;
                MultiIndexSet::from_indices(self.n, indices).map_err(|e| e.to_string())?
            }
            kind => MultiIndexSet::generate(kind, self.n, self.w).map_err(|e| e.to_string())?,
        };
        let regenerated = Self::from_set(&set).map_err(|e| e.to_string())?;
        if regenerated.indices != self.indices {
            return Err("stored indices do not match the declared kind and w".into());
        }
        if regenerated.coefficients != self.coefficients {
            return Err("stored coefficients do not match the index set".into());
        }
        Ok(set)
    }
}

/// Space, index set, the M × N global points, output names and P × M values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateFile {
    pub space: ParameterSpace,
    pub index_set: IndexSetFile,
    pub points: Vec<Vec<f64>>,
    pub output_names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl SurrogateFile {
    pub fn from_surrogate(s: &Surrogate) -> Result<Self, MultiIndexError> {
        Ok(Self {
            space: s.grid().space().clone(),
            index_set: IndexSetFile::from_set(s.grid().index_set())?,
            points: s.grid().points().to_vec(),
            output_names: s.output_names().to_vec(),
            values: s.values().to_vec(),
        })
    }

    /// Regenerates the grid and requires its points to match the stored ones bit for bit.
    pub fn to_surrogate(&self) -> Result<Surrogate, String> {
        let set = self.index_set.to_set()?;
        let grid = SparseGrid::new(self.space.clone(), set).map_err(|e| e.to_string())?;
        if grid.len() != self.points.len() {
            return Err(format!(
                "file has {} points, regenerated grid has {}",
                self.points.len(),
                grid.len()
            ));
        }
        for (point, (a, b)) in grid.points().iter().zip(&self.points).enumerate() {
            let same = a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
            if !same {
                return Err(SurrogateError::PointMismatch { point }.to_string());
            }
        }
        Surrogate::new(grid, self.output_names.clone(), self.values.clone()).map_err(|e| e.to_string())
    }
}

pub fn write_surrogate(path: &Path, s: &Surrogate) -> Result<()> {
    let file = SurrogateFile::from_surrogate(s).map_err(|e| Error::Config(e.to_string()))?;
    write_json(path, &file)
}

pub fn read_surrogate(path: &Path) -> Result<Surrogate> {
    let file: SurrogateFile = read_json(path)?;
    file.to_surrogate()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// One row of the per-location band table.
#[derive(Debug, Clone, PartialEq)]
pub struct BandRow {
    pub location_id: usize,
    pub x: Option<f64>,
    pub prior: Option<(f64, f64, f64)>,
    pub posterior: (f64, f64, f64),
    pub target_value: Option<f64>,
}

pub const BAND_HEADER: [&str; 9] = [
    "location_id",
    "x",
    "prior_mode",
    "prior_q05",
    "prior_q95",
    "post_mode",
    "post_q05",
    "post_q95",
    "target_value",
];

/// Empty cells stand for missing optional values.
pub fn band_csv(rows: &[BandRow]) -> String {
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    let mut out = BAND_HEADER.join(",");
    out.push('\n');
    for r in rows {
        let (pm, p5, p95) = match r.prior {
            Some((m, a, b)) => (fmt_f64(m), fmt_f64(a), fmt_f64(b)),
            None => Default::default(),
        };
        let cells = [
            r.location_id.to_string(),
            opt(r.x),
            pm,
            p5,
            p95,
            fmt_f64(r.posterior.0),
            fmt_f64(r.posterior.1),
            fmt_f64(r.posterior.2),
            opt(r.target_value),
        ];
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Parses a band table written by [`band_csv`].
pub fn parse_band_csv(text: &str) -> Result<Vec<BandRow>, String> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().ne(BAND_HEADER.iter().copied()) {
        return Err(format!("unexpected header {header:?}"));
    }
    let num = |s: &str| -> Result<Option<f64>, String> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| format!("bad number {s:?}"))
        }
    };
    let mut rows = Vec::new();
    for record in reader.records() {
        let r = record.map_err(|e| e.to_string())?;
        let f: Vec<Option<f64>> = (1..9).map(|i| num(&r[i])).collect::<Result<_, _>>()?;
        let req = |x: Option<f64>| x.ok_or_else(|| "missing posterior column".to_string());
        rows.push(BandRow {
            location_id: r[0].parse().map_err(|_| format!("bad location id {:?}", &r[0]))?,
            x: f[0],
            prior: match (f[1], f[2], f[3]) {
                (Some(a), Some(b), Some(c)) => Some((a, b, c)),
                _ => None,
            },
            posterior: (req(f[4])?, req(f[5])?, req(f[6])?),
            target_value: f[7],
        });
    }
    Ok(rows)
}
