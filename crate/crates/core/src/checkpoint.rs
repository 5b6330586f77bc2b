//! Exact JSON snapshots of a training run. Every float is stored as the
//! 16-digit hex of its IEEE-754 bit pattern.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::{DenseMatrix, RngState};
use crate::optimizer::{AdamState, OptimizerKind};
use crate::trainer::{InsertionEvent, Parameters, Termination, TrainConfig, TrainRecord, TrainerOptimizer};
use crate::trajectory::ControlPath;

pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_f64(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

pub fn decode_f64(s: &str) -> Result<f64> {
    if s.len() != 16 {
        return Err(Error::Checkpoint(format!("bad float encoding {s:?}")));
    }
    u64::from_str_radix(s, 16)
        .map(f64::from_bits)
        .map_err(|_| Error::Checkpoint(format!("bad float encoding {s:?}")))
}

fn encode_all(v: &[f64]) -> Vec<String> {
    v.iter().copied().map(encode_f64).collect()
}

fn decode_all(v: &[String]) -> Result<Vec<f64>> {
    v.iter().map(|s| decode_f64(s)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HexMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<String>,
}

impl HexMatrix {
    fn encode(m: &DenseMatrix) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            entries: encode_all(m.entries()),
        }
    }

    fn decode(&self) -> Result<DenseMatrix> {
        DenseMatrix::from_row_major(self.rows, self.cols, decode_all(&self.entries)?)
            .map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HexAdam {
    pub kind: OptimizerKind,
    pub learning_rate: String,
    pub beta1: String,
    pub beta2: String,
    pub epsilon: String,
    pub step: u64,
    pub first_moment: Vec<String>,
    pub second_moment: Vec<String>,
}

impl HexAdam {
    fn encode(s: &AdamState) -> Self {
        Self {
            kind: s.kind,
            learning_rate: encode_f64(s.learning_rate),
            beta1: encode_f64(s.beta1),
            beta2: encode_f64(s.beta2),
            epsilon: encode_f64(s.epsilon),
            step: s.step,
            first_moment: encode_all(&s.first_moment),
            second_moment: encode_all(&s.second_moment),
        }
    }

    fn decode(&self) -> Result<AdamState> {
        let first_moment = decode_all(&self.first_moment)?;
        let second_moment = decode_all(&self.second_moment)?;
        if first_moment.len() != second_moment.len() {
            return Err(Error::Checkpoint("optimizer moment lengths differ".into()));
        }
        Ok(AdamState {
            kind: self.kind,
            learning_rate: decode_f64(&self.learning_rate)?,
            beta1: decode_f64(&self.beta1)?,
            beta2: decode_f64(&self.beta2)?,
            epsilon: decode_f64(&self.epsilon)?,
            step: self.step,
            first_moment,
            second_moment,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HexInsertion {
    pub iteration: usize,
    pub k_star: usize,
    pub t_new: String,
    pub grid: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointOptimizer {
    pub theta: HexAdam,
    pub w_in: Option<HexAdam>,
    pub w_out: Option<HexAdam>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub config: TrainConfig,
    pub iterations: usize,
    pub termination: Termination,
    pub initial_grid: Vec<String>,
    pub grid: Vec<String>,
    /// One entry per node.
    pub theta: Vec<Vec<String>>,
    pub w_in: HexMatrix,
    pub w_out: HexMatrix,
    pub optimizer: CheckpointOptimizer,
    pub rng: RngState,
    pub insertions: Vec<HexInsertion>,
}

/// Decoded contents of a checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct Restored {
    pub config: TrainConfig,
    pub iterations: usize,
    pub termination: Termination,
    pub initial_grid: TimeGrid,
    pub params: Parameters,
    pub optimizer: TrainerOptimizer,
    pub rng: RngState,
    pub insertions: Vec<InsertionEvent>,
}

fn decode_grid(nodes: &[String]) -> Result<TimeGrid> {
    TimeGrid::from_nodes(decode_all(nodes)?).map_err(|e| Error::Checkpoint(e.to_string()))
}

impl Checkpoint {
    pub fn from_record(record: &TrainRecord) -> Self {
        let theta = &record.params.theta;
        Self {
            schema_version: CHECKPOINT_VERSION,
            config: record.config.clone(),
            iterations: record.iterations,
            termination: record.termination,
            initial_grid: encode_all(record.initial_grid.nodes()),
            grid: encode_all(theta.grid().nodes()),
            theta: theta.values().iter().map(|v| encode_all(v.as_slice())).collect(),
            w_in: HexMatrix::encode(&record.params.w_in),
            w_out: HexMatrix::encode(&record.params.w_out),
            optimizer: CheckpointOptimizer {
                theta: HexAdam::encode(&record.optimizer.theta),
                w_in: record.optimizer.w_in.as_ref().map(HexAdam::encode),
                w_out: record.optimizer.w_out.as_ref().map(HexAdam::encode),
            },
            rng: record.rng,
            insertions: record
                .insertions
                .iter()
                .map(|e| HexInsertion {
                    iteration: e.iteration,
                    k_star: e.k_star,
                    t_new: encode_f64(e.t_new),
                    grid: encode_all(e.grid.nodes()),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cp: Self = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if cp.schema_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported schema_version {}",
                cp.schema_version
            )));
        }
        Ok(cp)
    }

    pub fn restore(&self) -> Result<Restored> {
        self.config
            .validate()
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let grid = decode_grid(&self.grid)?;
        let width = self.config.width;
        let values = self
            .theta
            .iter()
            .map(|v| crate::field::ThetaVec::from_vec(width, decode_all(v)?))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let theta = ControlPath::new(grid, values).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let params = Parameters {
            w_in: self.w_in.decode()?,
            w_out: self.w_out.decode()?,
            theta,
        };
        if params.w_in.rows() != width || params.w_out.cols() != width {
            return Err(Error::Checkpoint("input/output maps do not match width".into()));
        }
        let optimizer = TrainerOptimizer {
            theta: self.optimizer.theta.decode()?,
            w_in: self.optimizer.w_in.as_ref().map(HexAdam::decode).transpose()?,
            w_out: self.optimizer.w_out.as_ref().map(HexAdam::decode).transpose()?,
        };
        if optimizer.theta.len() != params.theta.flatten().len() {
            return Err(Error::Checkpoint("optimizer state does not match controls".into()));
        }
        let insertions = self
            .insertions
            .iter()
            .map(|e| {
                Ok(InsertionEvent {
                    iteration: e.iteration,
                    k_star: e.k_star,
                    t_new: decode_f64(&e.t_new)?,
                    grid: decode_grid(&e.grid)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Restored {
            config: self.config.clone(),
            iterations: self.iterations,
            termination: self.termination,
            initial_grid: decode_grid(&self.initial_grid)?,
            params,
            optimizer,
            rng: self.rng,
            insertions,
        })
    }
}
