//! Experiment orchestration behind the command-line tool.

mod bench;
mod checks;
mod config;
pub mod oltc;
mod summary;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::Network;

pub use bench::{run_rl_benchmark, write_eval_csv, write_summary_csv, BenchmarkRow, RlBenchmark};
pub use checks::{gradcheck_suite, GRADCHECK_CASES};
pub use config::{AgentSection, DspSection, NnSection, RunConfig, SynthSection, CONFIG_ENV};
pub use summary::{summarize, Summary};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Persisted outcome of one command. Everything except `wall_clock_s` is a pure
/// function of `config` and `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub command: String,
    pub toolkit_version: String,
    pub seed: u64,
    pub config: RunConfig,
    pub metrics: BTreeMap<String, Vec<f64>>,
    pub summary: serde_json::Value,
    pub wall_clock_s: f64,
}

impl ExperimentRecord {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            command: command.into(),
            toolkit_version: TOOLKIT_VERSION.into(),
            seed: config.seed,
            config: config.clone(),
            metrics: BTreeMap::new(),
            summary: serde_json::Value::Null,
            wall_clock_s: 0.0,
        }
    }

    /// Record with the wall-clock field zeroed, for bitwise comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_clock_s: 0.0,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("records serialize to JSON")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| crate::Error::Validation(format!("{}: {e}", path.display())))
    }
}

/// Creates `dir` and writes `record.json` plus the resolved `config.toml`.
pub fn write_record(dir: &Path, record: &ExperimentRecord) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), record.config.to_toml())?;
    let path = dir.join("record.json");
    fs::write(&path, record.to_json())?;
    Ok(path)
}

pub(crate) fn write_lines(path: &Path, header: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{header}")?;
    for r in rows {
        writeln!(w, "{r}")?;
    }
    w.flush()?;
    Ok(())
}

/// Trains and evaluates the OLTC classifier.
pub fn run_oltc_experiment(cfg: &RunConfig) -> Result<(ExperimentRecord, oltc::OltcReport, Network)> {
    cfg.validate()?;
    let start = Instant::now();
    let (report, net) = oltc::run(&cfg.oltc())?;
    let mut rec = ExperimentRecord::new("train-oltc", cfg);
    rec.metrics.insert("epoch_loss".into(), report.epoch_loss.clone());
    rec.metrics
        .insert("snr_db".into(), report.robustness.iter().map(|p| p.snr_db).collect());
    rec.metrics.insert(
        "accuracy_noisy".into(),
        report.robustness.iter().map(|p| p.accuracy_noisy).collect(),
    );
    rec.metrics.insert(
        "accuracy_denoised".into(),
        report.robustness.iter().map(|p| p.accuracy_denoised).collect(),
    );
    rec.summary = serde_json::json!({
        "train_accuracy": report.train_accuracy,
        "test_accuracy": report.test_accuracy,
        "baseline_accuracy": report.baseline_accuracy,
        "classes": oltc::class_names(),
        "confusion": report.confusion,
        "warnings": report.warnings,
    });
    rec.wall_clock_s = start.elapsed().as_secs_f64();
    Ok((rec, report, net))
}

/// `confusion.csv`: rows are true classes, columns predictions.
pub fn write_confusion_csv(path: &Path, confusion: &[Vec<usize>]) -> Result<()> {
    let names = oltc::class_names();
    write_lines(
        path,
        &format!("true\\predicted,{}", names.join(",")),
        confusion.iter().zip(&names).map(|(row, n)| {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            format!("{n},{}", cells.join(","))
        }),
    )
}

pub fn write_robustness_csv(path: &Path, clean: f64, points: &[oltc::RobustnessPoint]) -> Result<()> {
    write_lines(
        path,
        "snr_db,accuracy_noisy,accuracy_denoised",
        std::iter::once(format!("inf,{clean},{clean}")).chain(
            points
                .iter()
                .map(|p| format!("{},{},{}", p.snr_db, p.accuracy_noisy, p.accuracy_denoised)),
        ),
    )
}
