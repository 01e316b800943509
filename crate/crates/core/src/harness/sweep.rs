//! Grid sweeps over `epsilon`, `dim`, `states` and `episodes`, one
//! independent run per cell and seed.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::experiment::{run_experiment, write_outputs, RunSummary};
use crate::error::Result;

/// One cell of the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub index: usize,
    pub epsilon: f64,
    pub dim: usize,
    pub states: usize,
    pub episodes: usize,
    pub seed: u64,
}

/// A finished cell as written to `sweep.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub epsilon: f64,
    pub dim: usize,
    pub states: usize,
    pub episodes: usize,
    pub seed: u64,
    pub suboptimal: usize,
    pub suboptimal_rate: f64,
    pub first_window_rate: f64,
    pub last_window_rate: f64,
    pub total_updates: u64,
    pub effective_m: u64,
    pub effective_r0: f64,
    pub effective_alpha: Option<f64>,
}

impl SweepRow {
    fn new(cell: &SweepCell, s: &RunSummary) -> Self {
        Self {
            index: cell.index,
            epsilon: cell.epsilon,
            dim: cell.dim,
            states: cell.states,
            episodes: cell.episodes,
            seed: cell.seed,
            suboptimal: s.suboptimal,
            suboptimal_rate: s.suboptimal_rate,
            first_window_rate: s.first_window_rate,
            last_window_rate: s.last_window_rate,
            total_updates: s.total_updates,
            effective_m: s.constants.effective_m,
            effective_r0: s.constants.effective_r0,
            effective_alpha: s.constants.effective_alpha,
        }
    }
}

fn axis<T: Clone>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

/// Expands the sweep section into cells, seeds varying fastest.
pub fn expand(base: &ExperimentConfig) -> Vec<SweepCell> {
    let grid = base.sweep.clone().unwrap_or_default();
    let mut cells = Vec::new();
    for &epsilon in &axis(&grid.epsilon, base.epsilon) {
        for &dim in &axis(&grid.dim, base.environment.dim) {
            for &states in &axis(&grid.states, base.environment.states) {
                for &episodes in &axis(&grid.episodes, base.episodes) {
                    for &seed in &axis(&grid.seeds, base.seed) {
                        cells.push(SweepCell {
                            index: cells.len(),
                            epsilon,
                            dim,
                            states,
                            episodes,
                            seed,
                        });
                    }
                }
            }
        }
    }
    cells
}

pub fn cell_config(base: &ExperimentConfig, cell: &SweepCell) -> ExperimentConfig {
    let mut config = base.clone();
    config.sweep = None;
    config.epsilon = cell.epsilon;
    config.environment.dim = cell.dim;
    config.environment.states = cell.states;
    config.episodes = cell.episodes;
    config.seed = cell.seed;
    config
}

/// Runs every cell in parallel and returns rows in cell order once all
/// have finished. With `out`, each cell's outputs go to `out/cell-NNNN` and
/// the table to `out/sweep.csv`.
pub fn run_sweep(base: &ExperimentConfig, out: Option<&Path>) -> Result<Vec<SweepRow>> {
    let cells = expand(base);
    for cell in &cells {
        cell_config(base, cell).validate()?;
    }
    let results: Vec<Result<SweepRow>> = cells
        .par_iter()
        .map(|cell| {
            let config = cell_config(base, cell);
            let result = run_experiment(&config)?;
            if let Some(dir) = out {
                write_outputs(&result, &dir.join(format!("cell-{:04}", cell.index)), config.output.checkpoint)?;
            }
            Ok(SweepRow::new(cell, &result.summary))
        })
        .collect();
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let mut writer = csv::Writer::from_path(dir.join("sweep.csv"))?;
        for row in &rows {
            writer.serialize(row)?;
        }
        writer.flush()?;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_expansion() {
        let base = ExperimentConfig::from_toml_str(
            r#"
            [environment]
            family = "linear"
            [agent]
            kind = "oracle"
            [sweep]
            dim = [2, 3]
            seeds = [1, 2, 3]
            "#,
        )
        .unwrap();
        let cells = expand(&base);
        assert_eq!(cells.len(), 6);
        assert_eq!((cells[0].dim, cells[0].seed), (2, 1));
        assert_eq!((cells[5].dim, cells[5].seed), (3, 3));
        assert!(cells.iter().all(|c| c.epsilon == 0.1 && c.states == 5));
    }
}
