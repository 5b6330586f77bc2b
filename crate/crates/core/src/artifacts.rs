//! Run-directory outputs. Every file is written to a temporary name in the
//! target directory and then renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::datasets::DatasetId;
use crate::dwr::IndicatorReport;
use crate::error::Result;
use crate::grid::TimeGrid;
use crate::trainer::{InsertionEvent, Mode, Termination, TrainRecord};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

pub const CONFIG_FILE: &str = "config.json";
pub const LOSS_FILE: &str = "loss.csv";
pub const GRIDS_FILE: &str = "grids.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const INDICATORS_FILE: &str = "indicators.csv";

/// Writes `contents` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub dataset: DatasetId,
    pub mode: Mode,
    pub seed: u64,
    pub data_seed: u64,
    pub d: usize,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub lambda: f64,
    pub lr: f64,
    pub tol: f64,
    pub it_max: usize,
    pub it_up: usize,
    pub iterations: usize,
    pub termination: Termination,
    #[serde(rename = "K")]
    pub depth: usize,
    pub final_train_loss: Option<f64>,
    pub final_val_loss: Option<f64>,
    pub final_accuracy: Option<f64>,
    pub insertions: usize,
    pub inserted_nodes: Vec<f64>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl Summary {
    pub fn from_record(record: &TrainRecord) -> Self {
        let c = &record.config;
        Self {
            schema_version: SUMMARY_SCHEMA_VERSION,
            dataset: c.dataset,
            mode: c.mode,
            seed: c.seed,
            data_seed: c.data_seed,
            d: c.width,
            t_final: c.t_final,
            lambda: c.lambda,
            lr: c.learning_rate,
            tol: c.tol,
            it_max: c.it_max,
            it_up: c.it_up,
            iterations: record.iterations,
            termination: record.termination,
            depth: record.intervals(),
            final_train_loss: finite(record.final_train_loss),
            final_val_loss: finite(record.final_val_loss),
            final_accuracy: finite(record.final_val_accuracy),
            insertions: record.insertions.len(),
            inserted_nodes: record.inserted_nodes(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridHistory {
    pub initial: TimeGrid,
    pub insertions: Vec<InsertionEvent>,
    #[serde(rename = "final")]
    pub final_grid: TimeGrid,
}

impl GridHistory {
    pub fn new(initial: &TimeGrid, insertions: &[InsertionEvent], final_grid: &TimeGrid) -> Self {
        Self {
            initial: initial.clone(),
            insertions: insertions.to_vec(),
            final_grid: final_grid.clone(),
        }
    }
}

pub fn loss_csv(record: &TrainRecord) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &record.history {
        w.serialize(row)?;
    }
    if record.history.is_empty() {
        w.write_record(["iteration", "train_loss", "val_loss", "val_accuracy", "K"])?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

/// Paths of the files in a run directory.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.root.join(file)
    }

    /// Writes config echo, loss trace, grid history, summary and checkpoint.
    pub fn write_training(&self, record: &TrainRecord) -> Result<()> {
        // Serialize everything first so a failure leaves no partial directory.
        let loss = loss_csv(record)?;
        let checkpoint = Checkpoint::from_record(record).to_json()?;
        fs::create_dir_all(&self.root)?;
        write_json(&self.path(CONFIG_FILE), &record.config)?;
        write_atomic(&self.path(LOSS_FILE), &loss)?;
        write_json(
            &self.path(GRIDS_FILE),
            &GridHistory::new(&record.initial_grid, &record.insertions, record.params.theta.grid()),
        )?;
        write_json(&self.path(SUMMARY_FILE), &Summary::from_record(record))?;
        write_atomic(&self.path(CHECKPOINT_FILE), checkpoint.as_bytes())?;
        Ok(())
    }

    pub fn write_indicators(&self, report: &IndicatorReport, history: &GridHistory) -> Result<()> {
        let mut buf = Vec::new();
        report.write_csv(&mut buf)?;
        fs::create_dir_all(&self.root)?;
        write_atomic(&self.path(INDICATORS_FILE), &buf)?;
        write_json(&self.path(GRIDS_FILE), history)?;
        Ok(())
    }
}
