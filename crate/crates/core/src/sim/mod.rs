//! Monte Carlo experiments on simulated polynomial data.
//!
//! Every output is a pure function of [`ExperimentConfig`]: trial `t` draws
//! from its own ChaCha8 stream keyed by the master seed, trials run on the
//! current rayon pool, and results are reduced in trial order. Wall-clock
//! timings go to separate files so the deterministic tables stay
//! byte-identical across runs and thread counts.

mod config;
mod data;
mod experiments;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use config::{ExperimentConfig, CONFIG_SCHEMA_VERSION, DEFAULT_TRUTH};
pub use data::{fold_seed, generate_dataset, signal_variance, trial_rng, truth_output};
pub use experiments::{
    compare_methods, length_sweep, order_sweep, run_bound_curves, run_cv_comparison,
    run_sample_complexity_table, run_selection_table, trial_records_table, ComparisonTables,
    LengthSweep, TrialRecord,
};

use crate::error::{Error, Result};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Shortest text that parses back to the same value; empty when undefined.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// A named CSV table with string cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Cell by column name.
    pub fn get(&self, row: usize, column: &str) -> Option<&str> {
        let c = self.header.iter().position(|h| h == column)?;
        self.rows.get(row).map(|r| r[c].as_str())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Which experiment to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    SampleComplexity,
    CvComparison,
    Selection,
    Figures,
}

impl Experiment {
    pub const ALL: [Experiment; 4] = [
        Experiment::SampleComplexity,
        Experiment::CvComparison,
        Experiment::Selection,
        Experiment::Figures,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub rows: usize,
    /// False for wall-clock timing files.
    pub deterministic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub code_version: String,
    pub experiments: Vec<Experiment>,
    pub config: ExperimentConfig,
    pub outputs: Vec<OutputFile>,
}

/// Run the chosen experiments and write their CSV files plus
/// `manifest.json` into `out_dir`.
pub fn run_and_write(
    config: &ExperimentConfig,
    experiments: &[Experiment],
    out_dir: &Path,
) -> Result<Manifest> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    let mut outputs = Vec::new();
    let mut emit = |table: &Table, deterministic: bool| -> Result<()> {
        let file = format!("{}.csv", table.name);
        fs::write(out_dir.join(&file), table.to_csv()?)?;
        outputs.push(OutputFile {
            path: file,
            rows: table.rows.len(),
            deterministic,
        });
        Ok(())
    };
    for exp in experiments {
        match exp {
            Experiment::SampleComplexity => emit(&run_sample_complexity_table(config)?, true)?,
            Experiment::CvComparison => {
                let t = run_cv_comparison(config)?;
                emit(&t.table, true)?;
                emit(&t.timing, false)?;
                if config.write_trial_records {
                    emit(&trial_records_table("table2_trials", &t.records), true)?;
                }
            }
            Experiment::Selection => {
                let t = run_selection_table(config)?;
                emit(&t.table, true)?;
                emit(&t.timing, false)?;
                if config.write_trial_records {
                    emit(&trial_records_table("table3_trials", &t.records), true)?;
                }
            }
            Experiment::Figures => {
                let (per_n, per_m) = run_bound_curves(config)?;
                emit(&per_n, true)?;
                emit(&per_m, true)?;
            }
        }
    }
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        experiments: experiments.to_vec(),
        config: config.clone(),
        outputs,
    };
    fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(manifest)
}
