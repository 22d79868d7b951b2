//! CSV datasets with `NA` for missing entries, and their JSON sidecars.

use crate::config::Config;
use crate::error::{CliError, CliResult};
use realizable_core::MaskedSample;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const MISSING: &str = "NA";

/// Seventeen significant digits: enough to round-trip any `f64`.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub rows: Vec<MaskedSample>,
}

impl Dataset {
    /// Columns `x1..xd`, plus `y` for regression rows.
    pub fn new(rows: Vec<MaskedSample>, width: usize, regression: bool) -> Self {
        let d = if regression { width - 1 } else { width };
        let mut columns: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        if regression {
            columns.push("y".into());
        }
        Self { columns, rows }
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn is_regression(&self) -> bool {
        self.columns.last().is_some_and(|c| c == "y")
    }

    /// Covariate dimension.
    pub fn dim(&self) -> usize {
        if self.is_regression() {
            self.width() - 1
        } else {
            self.width()
        }
    }

    pub fn na_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.is_missing()).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            for (i, v) in row.values().iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                match v {
                    Some(x) => {
                        let _ = write!(out, "{}", fmt17(*x));
                    }
                    None => out.push_str(MISSING),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_csv(text: &str) -> CliResult<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let columns: Vec<String> = reader
            .headers()
            .map_err(|e| CliError::Data(format!("header: {e}")))?
            .iter()
            .map(|s| s.trim().to_string())
            .collect();
        if columns.is_empty() || columns.iter().any(String::is_empty) {
            return Err(CliError::Data("empty header".into()));
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| CliError::Data(format!("line {line}: {e}")))?;
            let values = rec
                .iter()
                .map(|f| {
                    let f = f.trim();
                    if f == MISSING {
                        return Ok(None);
                    }
                    match f.parse::<f64>() {
                        Ok(x) if x.is_finite() => Ok(Some(x)),
                        _ => Err(CliError::Data(format!("line {line}: `{f}` is neither a finite number nor {MISSING}"))),
                    }
                })
                .collect::<CliResult<Vec<_>>>()?;
            rows.push(MaskedSample::new(values).map_err(|e| CliError::Data(format!("line {line}: {e}")))?);
        }
        Ok(Self { columns, rows })
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse_csv(&text)
    }
}

/// Parameters the data were generated from, when known.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Truth {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub schema_version: u32,
    pub generator: String,
    pub seed: u64,
    pub n: usize,
    pub na_rows: usize,
    pub columns: Vec<String>,
    pub truth: Truth,
    pub config: Config,
}

/// `data.csv` → `data.json`.
pub fn sidecar_path(data: &Path) -> PathBuf {
    data.with_extension("json")
}

impl Sidecar {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).unwrap_or_default();
        s.push('\n');
        s
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}
