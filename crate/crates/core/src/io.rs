//! Run manifests, configuration files and CSV output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::pde_simulator::{RadialGrid, RadialField};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("json error in {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("unsupported schema {0}")]
    Schema(u32),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

/// A derived number together with the tolerance it was computed at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaggedConstant {
    pub value: f64,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: u32,
    pub command: String,
    /// Everything needed to rerun the command.
    pub parameters: BTreeMap<String, Value>,
    pub derived_constants: BTreeMap<String, TaggedConstant>,
    pub artifacts: Vec<String>,
    pub wall_time_s: f64,
    /// Diagnostics series (not needed for a rerun).
    #[serde(default)]
    pub diagnostics: BTreeMap<String, Value>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            command: command.to_string(),
            parameters: BTreeMap::new(),
            derived_constants: BTreeMap::new(),
            artifacts: Vec::new(),
            wall_time_s: 0.0,
            diagnostics: BTreeMap::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.parameters.insert(key.to_string(), serde_json::to_value(value).expect("serializable parameter"));
        self
    }

    pub fn constant(&mut self, key: &str, value: f64, tol: f64) -> &mut Self {
        self.derived_constants.insert(key.to_string(), TaggedConstant { value, tol });
        self
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        let text = serde_json::to_string_pretty(self).map_err(|source| IoError::Json { path: path.into(), source })?;
        fs::write(path, text + "\n").map_err(io_err(path))
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let m: Self = serde_json::from_str(&text).map_err(|source| IoError::Json { path: path.into(), source })?;
        if m.schema != SCHEMA_VERSION {
            return Err(IoError::Schema(m.schema));
        }
        Ok(m)
    }
}

/// Grid specification `R,M,r1` (`r1 = 0` for a uniform grid).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub r_max: f64,
    pub cells: usize,
    pub r1: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<RadialGrid, IoError> {
        if !(self.r_max > 0.0) || self.cells < 2 {
            return Err(IoError::Invalid("grid needs r_max > 0 and at least 2 cells".into()));
        }
        if self.r1 == 0.0 {
            return Ok(RadialGrid::uniform(self.r_max, self.cells));
        }
        if !(self.r1 > 0.0 && self.r1 <= 1e-3 * self.r_max) {
            return Err(IoError::Invalid("graded grids need 0 < r1 <= 1e-3 r_max".into()));
        }
        Ok(RadialGrid::graded(self.r_max, self.cells, self.r1))
    }
}

impl std::str::FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != 3 {
            return Err("expected R,M,r1".into());
        }
        let r_max = parts[0].trim().parse().map_err(|e| format!("{e}"))?;
        let cells = parts[1].trim().parse().map_err(|e| format!("{e}"))?;
        let r1 = parts[2].trim().parse().map_err(|e| format!("{e}"))?;
        Ok(Self { r_max, cells, r1 })
    }
}

/// Settings file for the command line tool. Absent fields fall back to the
/// command's own defaults; flags override both.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub tol: Option<f64>,
    pub rho_max: Option<f64>,
    pub grid: Option<GridSpec>,
    pub dt: Option<f64>,
    pub t_span: Option<(f64, f64)>,
    pub epsilon_seq: Option<Vec<f64>>,
}

impl Config {
    pub fn from_file(path: &Path) -> Result<Self, IoError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let c: Self = serde_json::from_str(&text).map_err(|source| IoError::Json { path: path.into(), source })?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), IoError> {
        let bad = |m: &str| Err(IoError::Invalid(m.to_string()));
        if self.tol.is_some_and(|t| !(t > 0.0 && t <= 1e-6)) {
            return bad("tol must lie in (0, 1e-6]");
        }
        if self.rho_max.is_some_and(|r| !(r >= 10.0)) {
            return bad("rho_max must be at least 10");
        }
        if self.dt.is_some_and(|dt| !(dt > 0.0)) {
            return bad("dt must be positive");
        }
        if self.t_span.is_some_and(|(a, b)| !(b > a && a >= 0.0)) {
            return bad("t_span must satisfy 0 <= t0 < t1");
        }
        if let Some(eps) = &self.epsilon_seq {
            if eps.is_empty() || eps.windows(2).any(|w| w[1] >= w[0]) || eps[eps.len() - 1] <= 0.0 {
                return bad("epsilon_seq must be positive and strictly decreasing");
            }
        }
        match &self.grid {
            Some(g) => g.build().map(|_| ()),
            None => Ok(()),
        }
    }
}

/// Float formatting used in every CSV: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write a CSV with a header line and one row per record.
pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), IoError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// `r,h` snapshot file.
pub fn write_snapshot(path: &Path, field: &RadialField) -> Result<(), IoError> {
    write_csv(path, &["r", "h"], field.r().iter().zip(&field.values).map(|(r, h)| [fmt_f64(*r), fmt_f64(*h)]))
}

/// Numeric contents of a CSV, header dropped.
pub fn read_csv(path: &Path) -> Result<Vec<Vec<f64>>, IoError> {
    let mut rd = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        out.push(rec.iter().map(|s| s.parse().unwrap_or(f64::NAN)).collect());
    }
    Ok(out)
}

/// Regression constants produced by the calibration command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub schema: u32,
    pub tol: f64,
    pub rho_max: f64,
    pub values: BTreeMap<String, TaggedConstant>,
}

impl Constants {
    pub fn read(path: &Path) -> Result<Self, IoError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|source| IoError::Json { path: path.into(), source })
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        let text = serde_json::to_string_pretty(self).map_err(|source| IoError::Json { path: path.into(), source })?;
        fs::write(path, text + "\n").map_err(io_err(path))
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.get(key).map(|c| c.value)
    }
}
