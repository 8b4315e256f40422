//! Machine-readable experiment output: CSV tables, JSON documents, and the
//! run manifest that makes stochastic runs replayable.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Output format for curve-like results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Invalid(format!(
                "unknown output format {other:?}; expected csv or json"
            ))),
        }
    }
}

/// A columnar result table with free-form metadata.
#[derive(Debug, Clone)]
pub struct Table {
    /// Key/value pairs emitted as `# key = value` comment lines.
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl Table {
    pub fn new() -> Self {
        Self { metadata: Vec::new(), columns: Vec::new() }
    }

    pub fn meta(mut self, key: &str, value: impl std::fmt::Display) -> Self {
        self.metadata.push((key.into(), value.to_string()));
        self
    }

    pub fn column(mut self, name: &str, values: Vec<f64>) -> Self {
        self.columns.push((name.into(), values));
        self
    }

    fn validate(&self) -> Result<()> {
        if self.columns.is_empty() {
            return Err(Error::Invalid("table has no columns".into()));
        }
        let n = self.columns[0].1.len();
        if self.columns.iter().any(|(_, v)| v.len() != n) {
            return Err(Error::Dimension("table columns have unequal lengths".into()));
        }
        Ok(())
    }

    /// Render as CSV: `# key = value` metadata lines, a header row, then one
    /// row per sample. Values use the shortest round-trip decimal form, so
    /// identical runs produce byte-identical files.
    pub fn to_csv(&self) -> Result<String> {
        self.validate()?;
        let mut s = String::new();
        for (k, v) in &self.metadata {
            writeln!(s, "# {k} = {v}").unwrap();
        }
        let header: Vec<&str> = self.columns.iter().map(|(n, _)| n.as_str()).collect();
        writeln!(s, "{}", header.join(",")).unwrap();
        let rows = self.columns[0].1.len();
        for i in 0..rows {
            let row: Vec<String> =
                self.columns.iter().map(|(_, v)| format!("{}", v[i])).collect();
            writeln!(s, "{}", row.join(",")).unwrap();
        }
        Ok(s)
    }

    /// Render as a JSON document with the same content as the CSV form.
    pub fn to_json(&self) -> Result<serde_json::Value> {
        self.validate()?;
        let meta: serde_json::Map<String, serde_json::Value> = self
            .metadata
            .iter()
            .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
            .collect();
        let cols: serde_json::Map<String, serde_json::Value> = self
            .columns
            .iter()
            .map(|(n, v)| (n.clone(), serde_json::json!(v)))
            .collect();
        Ok(serde_json::json!({ "metadata": meta, "columns": cols }))
    }

    /// Write the table to `dir/<stem>.<ext>` in the requested format and
    /// return the path.
    pub fn write(&self, dir: &Path, stem: &str, format: OutputFormat) -> Result<PathBuf> {
        let path = match format {
            OutputFormat::Csv => {
                let p = dir.join(format!("{stem}.csv"));
                std::fs::write(&p, self.to_csv()?)?;
                p
            }
            OutputFormat::Json => {
                let p = dir.join(format!("{stem}.json"));
                write_json(&p, &self.to_json()?)?;
                p
            }
        };
        Ok(path)
    }
}

impl Default for Table {
    fn default() -> Self {
        Self::new()
    }
}

/// Write any serializable document as pretty-printed JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Invalid(format!("JSON serialization failed: {e}")))?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

/// A 4x4 complex matrix split into real and imaginary parts for JSON output.
#[derive(Debug, Clone, Serialize)]
pub struct MatrixJson {
    pub real: Vec<Vec<f64>>,
    pub imag: Vec<Vec<f64>>,
}

impl MatrixJson {
    pub fn from_matrix(m: &ndarray::Array2<num_complex::Complex64>) -> Self {
        let (r, c) = m.dim();
        let real = (0..r).map(|i| (0..c).map(|j| m[[i, j]].re).collect()).collect();
        let imag = (0..r).map(|i| (0..c).map(|j| m[[i, j]].im).collect()).collect();
        Self { real, imag }
    }
}

/// Record of one experiment run: enough to replay any stochastic output
/// byte-for-byte (config snapshot + seed + artifact version).
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub experiment: String,
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(experiment: &str, seed: u64, config: serde_json::Value) -> Self {
        Self {
            experiment: experiment.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config,
            wall_time_s: 0.0,
            outputs: Vec::new(),
        }
    }

    /// Write to `dir/<experiment>_manifest.json` and return the path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("{}_manifest.json", self.experiment));
        write_json(&path, self)?;
        Ok(path)
    }
}
