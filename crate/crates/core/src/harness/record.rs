//! Run records and their on-disk forms.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::decay::DecayReport;
use crate::diagnostics::{svg_plot, write_records_csv, DiagnosticsRecord, MonitorSeries};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunStatus {
    Success,
    /// The decomposition or the solver failed at `t` before reaching `T₀`
    /// and no decoupled window was left above it.
    Failed { t: f64, message: String },
    BlowUp { t: f64 },
}

impl RunStatus {
    pub fn is_success(&self) -> bool {
        matches!(self, RunStatus::Success)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: f64,
    /// Relative to the run's output directory.
    pub file: PathBuf,
    pub l2_norm: f64,
}

/// Fitted bound of one monitor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorFit {
    pub name: String,
    pub constant: Option<f64>,
    pub rates: Option<(f64, f64)>,
    pub dominated: bool,
    pub samples: usize,
}

impl From<&MonitorSeries> for MonitorFit {
    fn from(series: &MonitorSeries) -> Self {
        Self {
            name: series.name.clone(),
            constant: series.constant(),
            rates: series.fit.as_ref().map(|f| f.rates),
            dominated: series.dominated(),
            samples: series.measured.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub seed: u64,
    pub horizon: f64,
    /// Smallest time kept: a margin above the first decomposition failure,
    /// or the scan minimum.
    pub t0: Option<f64>,
    /// Where the downward scan stopped, if it failed.
    pub scan_failure: Option<f64>,
    pub status: RunStatus,
    pub checkpoints: Vec<Checkpoint>,
    /// Ascending in time, restricted to `[T₀, T_n]`.
    pub diagnostics: Vec<DiagnosticsRecord>,
    pub monitors: Vec<MonitorFit>,
    pub decay: Option<DecayReport>,
    /// `max_t |Σ_k I_k − ‖u‖²| / ‖u‖²`.
    pub partition_error: f64,
}

impl RunRecord {
    pub fn monitor(&self, name: &str) -> Option<&MonitorFit> {
        self.monitors.iter().find(|m| m.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }

    /// File stem shared by every output of this run.
    pub fn stem(&self) -> String {
        format!("seed{}_T{}", self.seed, self.horizon)
    }
}

/// Read every `seed*.json` run record in a directory, sorted by file name.
pub fn read_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("seed")))
        .collect();
    paths.sort();
    paths.iter().map(|p| RunRecord::from_json(&std::fs::read_to_string(p)?)).collect()
}

/// `<stem>.json`, `<stem>.csv` and, when asked, `<stem>_eps.svg`.
pub fn write_record(record: &RunRecord, dir: &Path, dim: usize, plots: bool) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let stem = record.stem();
    std::fs::write(dir.join(format!("{stem}.json")), record.to_json()? + "\n")?;
    let mut csv = BufWriter::new(File::create(dir.join(format!("{stem}.csv")))?);
    write_records_csv(&record.diagnostics, dim, &mut csv)?;
    csv.flush()?;
    if plots {
        let (ts, eps): (Vec<f64>, Vec<f64>) = record
            .diagnostics
            .iter()
            .filter(|r| r.eps_h1 > 0.0)
            .map(|r| (r.t, r.eps_h1 * r.eps_h1))
            .unzip();
        std::fs::write(dir.join(format!("{stem}_eps.svg")), svg_plot(&ts, &eps, "t", "|eps|_H1^2", true))?;
    }
    Ok(())
}
