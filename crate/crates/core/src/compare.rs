//! Adaptive vs random insertion vs fixed uniform depth, per seed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::trainer::{train, Mode, Termination, TrainConfig, TrainRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub method: Mode,
    pub seed: u64,
    pub accuracy: Option<f64>,
    pub iterations: Option<usize>,
    #[serde(rename = "K")]
    pub depth: Option<usize>,
    pub termination: Option<Termination>,
    pub inserted_nodes: Vec<f64>,
    pub error: Option<String>,
}

impl Cell {
    fn from_result(method: Mode, seed: u64, result: &Result<TrainRecord>) -> Self {
        match result {
            Ok(r) => Self {
                method,
                seed,
                accuracy: r.final_val_accuracy.is_finite().then_some(r.final_val_accuracy),
                iterations: Some(r.iterations),
                depth: Some(r.intervals()),
                termination: Some(r.termination),
                inserted_nodes: r.inserted_nodes(),
                error: None,
            },
            Err(e) => Self {
                method,
                seed,
                accuracy: None,
                iterations: None,
                depth: None,
                termination: None,
                inserted_nodes: Vec::new(),
                error: Some(e.to_string()),
            },
        }
    }

    pub fn succeeded(&self) -> bool {
        self.error.is_none() && self.termination != Some(Termination::NonFinite)
    }

    /// `accuracy || iterations`, or `failed`.
    pub fn label(&self) -> String {
        match (self.accuracy, self.iterations) {
            (Some(a), Some(it)) if self.error.is_none() => format!("{a:.2} || {it}"),
            _ => "failed".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub seeds: Vec<u64>,
    /// Cells in method order adaptive, random, fixed; each row holds one cell
    /// per seed.
    pub rows: Vec<Vec<Cell>>,
}

pub const METHODS: [Mode; 3] = [Mode::Adaptive, Mode::Random, Mode::Fixed];

impl ComparisonTable {
    pub fn cell(&self, method: Mode, seed: u64) -> Option<&Cell> {
        let row = METHODS.iter().position(|&m| m == method)?;
        let col = self.seeds.iter().position(|&s| s == seed)?;
        self.rows.get(row)?.get(col)
    }

    pub fn any_succeeded(&self) -> bool {
        self.rows.iter().flatten().any(Cell::succeeded)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["method".to_string()];
        header.extend(self.seeds.iter().map(|s| format!("seed {s}")));
        w.write_record(&header)?;
        for (method, row) in METHODS.iter().zip(&self.rows) {
            let mut rec = vec![method.as_str().to_string()];
            rec.extend(row.iter().map(Cell::label));
            w.write_record(&rec)?;
        }
        w.into_inner().map_err(|e| e.into_error().into())
    }
}

/// Runs all three methods for one seed. The fixed depth is the adaptive
/// final depth; if the adaptive run fails the fixed run fails too.
pub fn compare_seed(base: &TrainConfig, data: &Dataset, seed: u64) -> [Cell; 3] {
    let with = |mode, k_fixed| TrainConfig {
        mode,
        seed,
        k_fixed,
        ..base.clone()
    };
    let adaptive = train(&with(Mode::Adaptive, None), data);
    let random = train(&with(Mode::Random, None), data);
    let fixed = match &adaptive {
        Ok(r) => train(&with(Mode::Fixed, Some(r.intervals())), data),
        Err(e) => Err(Error::InvalidArgument(format!("adaptive run failed: {e}"))),
    };
    [
        Cell::from_result(Mode::Adaptive, seed, &adaptive),
        Cell::from_result(Mode::Random, seed, &random),
        Cell::from_result(Mode::Fixed, seed, &fixed),
    ]
}

/// Seeds run concurrently; each run is isolated so the table does not depend
/// on scheduling.
pub fn compare(base: &TrainConfig, data: &Dataset, seeds: &[u64]) -> Result<ComparisonTable> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one seed required".into()));
    }
    base.validate()?;
    let per_seed: Vec<[Cell; 3]> = seeds.par_iter().map(|&s| compare_seed(base, data, s)).collect();
    let rows = (0..3)
        .map(|m| per_seed.iter().map(|cells| cells[m].clone()).collect())
        .collect();
    Ok(ComparisonTable {
        seeds: seeds.to_vec(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::swiss_roll;

    #[test]
    fn single_seed_table() {
        let config = TrainConfig { it_max: 8, it_up: 2, ..TrainConfig::swiss_roll() };
        let table = compare(&config, &swiss_roll(), &[7]).unwrap();
        assert_eq!(table.rows.len(), 3);
        assert!(table.rows.iter().all(|r| r.len() == 1));
        let adaptive = table.cell(Mode::Adaptive, 7).unwrap();
        let fixed = table.cell(Mode::Fixed, 7).unwrap();
        assert_eq!(adaptive.depth, Some(5));
        assert_eq!(fixed.depth, adaptive.depth);
        assert!(table.any_succeeded());
        let csv = String::from_utf8(table.to_csv().unwrap()).unwrap();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "method,seed 7");
        assert!(lines[1].starts_with("adaptive,") && lines[1].contains(" || 8"));
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn empty_seed_list_is_rejected() {
        assert!(compare(&TrainConfig::swiss_roll(), &swiss_roll(), &[]).is_err());
    }
}
