//! On-disk formats written by the CLI: `coreset.json`, eval reports and
//! sweep tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use coreset_core::{CoresetError, CoresetResult, Result};

pub const CORESET_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoresetFile {
    pub version: u32,
    pub method: String,
    /// Requested fraction (the budget is `round(fraction · n)`).
    pub fraction: f64,
    pub seed: u64,
    pub params: BTreeMap<String, Value>,
    pub indices: Vec<usize>,
    pub weights: Vec<f32>,
    pub metadata: BTreeMap<String, Value>,
}

impl CoresetFile {
    pub fn new(result: CoresetResult, fraction: f64, params: BTreeMap<String, Value>) -> Self {
        Self {
            version: CORESET_FILE_VERSION,
            method: result.method,
            fraction,
            seed: result.seed,
            params,
            indices: result.indices,
            weights: result.weights,
            metadata: result.metadata,
        }
    }

    pub fn to_result(&self) -> CoresetResult {
        CoresetResult {
            method: self.method.clone(),
            fraction: self.fraction,
            seed: self.seed,
            indices: self.indices.clone(),
            weights: self.weights.clone(),
            metadata: self.metadata.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("coreset file serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, file: &str) -> Result<Self> {
        let parsed: Self = serde_json::from_str(text).map_err(|e| CoresetError::Format {
            file: file.to_string(),
            message: e.to_string(),
        })?;
        if parsed.version != CORESET_FILE_VERSION {
            return Err(CoresetError::Format {
                file: file.to_string(),
                message: format!("unsupported coreset file version {}", parsed.version),
            });
        }
        if parsed.indices.len() != parsed.weights.len() {
            return Err(CoresetError::Format {
                file: file.to_string(),
                message: format!("{} indices but {} weights", parsed.indices.len(), parsed.weights.len()),
            });
        }
        if parsed.indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CoresetError::Format {
                file: file.to_string(),
                message: "indices must be strictly increasing".into(),
            });
        }
        Ok(parsed)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| io_error(path, source))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_json().as_bytes())
    }
}

pub(crate) fn io_error(path: &Path, source: std::io::Error) -> CoresetError {
    CoresetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| io_error(path, e))
}

/// Mean and population standard deviation (denominator `r`).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / r;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub fraction: f64,
    pub k: usize,
    pub repeats: usize,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean_acc: f64,
    pub std_acc: f64,
}

impl EvalReport {
    pub fn summary(&self) -> String {
        format!(
            "{} @ {}: {:.2} ± {:.2} (k = {}, {} run{})",
            self.method,
            self.fraction,
            100.0 * self.mean_acc,
            100.0 * self.std_acc,
            self.k,
            self.repeats,
            if self.repeats == 1 { "" } else { "s" }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub method: String,
    pub fraction: f64,
    pub repeats: usize,
    pub mean_acc: f64,
    pub std_acc: f64,
    pub seconds: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| CoresetError::InvalidArgument(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CoresetError::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Aligned text table. Rows at fraction 1.0 train on the whole set and
/// are marked as the shared upper bound.
pub fn sweep_table(rows: &[SweepRow]) -> String {
    let width = rows.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>8}  {:>15}  {:>8}", "method", "fraction", "accuracy (%)", "seconds");
    for r in rows {
        let acc = format!("{:.2} ± {:.2}", 100.0 * r.mean_acc, 100.0 * r.std_acc);
        let mark = if r.fraction == 1.0 { "  (full data, upper bound)" } else { "" };
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>15}  {:>8.2}{mark}",
            r.method, r.fraction, acc, r.seconds
        );
    }
    out
}
