use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::error::{Error, Result};

pub const SCHEMA: &str = "hyloc-report/1";

pub const CSV_HEADER: &str = "method,grid_var,grid_value,rmse_m,crlb_rmse_m,mean_iters,mean_ms,failures";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub grid_var: String,
    pub grid_value: f64,
    /// `None` when every trial failed.
    pub rmse_m: Option<f64>,
    /// `sqrt` of the trace CRLB averaged over trial geometries. `None` at
    /// zero noise or if any trial geometry was unidentifiable.
    pub crlb_rmse_m: Option<f64>,
    pub mean_iters: f64,
    pub mean_ms: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub method: String,
    pub grid_index: usize,
    pub trial: usize,
    /// `‖ŝ − s‖`, or `None` on an explicit solver failure.
    pub error_m: Option<f64>,
    pub iterations: usize,
    pub ms: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseReport {
    pub schema: String,
    pub config: ExperimentConfig,
    /// One row per method and grid point, grid-major.
    pub rows: Vec<ReportRow>,
    pub trials: Vec<TrialRecord>,
}

/// `sqrt(mean(e²))`.
pub fn rmse(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::InvalidMeasurements("RMSE of an empty error list".into()));
    }
    Ok((errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt())
}

impl RmseReport {
    pub fn row(&self, method: &str, grid_value: f64) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method && r.grid_value == grid_value)
    }

    /// Rows of one method in grid order.
    pub fn series(&self, method: &str) -> Vec<&ReportRow> {
        self.rows.iter().filter(|r| r.method == method).collect()
    }

    /// Recomputes every row's RMSE and failure count from the stored
    /// per-trial errors.
    pub fn check_consistency(&self) -> Result<()> {
        let grid = self.config.grid();
        for row in &self.rows {
            let gi = grid
                .iter()
                .position(|v| *v == row.grid_value)
                .ok_or_else(|| Error::InvalidConfig(format!("row grid value {} not in grid", row.grid_value)))?;
            let records: Vec<&TrialRecord> = self
                .trials
                .iter()
                .filter(|t| t.method == row.method && t.grid_index == gi)
                .collect();
            let errors: Vec<f64> = records.iter().filter_map(|t| t.error_m).collect();
            let failures = records.len() - errors.len();
            if failures != row.failures || rmse(&errors).ok() != row.rmse_m {
                return Err(Error::InvalidConfig(format!(
                    "row {}@{} disagrees with its trial records",
                    row.method, row.grid_value
                )));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        let opt = |v: Option<f64>| v.map_or_else(|| "NaN".to_string(), |x| x.to_string());
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.method,
                r.grid_var,
                r.grid_value,
                opt(r.rmse_m),
                opt(r.crlb_rmse_m),
                r.mean_iters,
                r.mean_ms,
                r.failures
            );
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: RmseReport = serde_json::from_str(s)?;
        if r.schema != SCHEMA {
            return Err(Error::InvalidConfig(format!("unsupported report schema {:?}", r.schema)));
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::InvalidConfig(format!("unknown format {other:?}"))),
        }
    }
}

/// Writes the report to `path`.
pub fn emit(report: &RmseReport, format: Format, path: &Path) -> Result<()> {
    let body = match format {
        Format::Csv => report.to_csv(),
        Format::Json => report.to_json()?,
    };
    fs::write(path, body)?;
    Ok(())
}
