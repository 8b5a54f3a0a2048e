use std::io::Write;

use dana_core::exectime::{speedup_point, Environment, Paradigm};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedupRow {
    pub workers: usize,
    pub paradigm: Paradigm,
    pub mode: Environment,
    pub speedup: f64,
}

/// Async and sync speedups for every environment and worker count in the
/// `[speedup]` section, seeded with the first configured seed.
pub fn speedup_table(config: &ExperimentConfig) -> Result<Vec<SpeedupRow>, CliError> {
    let seed = config.seeds.first().copied().unwrap_or(0);
    let grid: Vec<(Environment, usize)> = config
        .speedup
        .environments
        .iter()
        .flat_map(|&env| config.speedup.workers.iter().map(move |&n| (env, n)))
        .collect();
    let points = grid
        .par_iter()
        .map(|&(env, n)| {
            let model = config.exec_model.gamma_model(env, config.batch_size);
            speedup_point(&model, n, config.speedup.iterations, seed).map(|p| (env, p))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(points
        .into_iter()
        .flat_map(|(mode, p)| {
            [Paradigm::Async, Paradigm::Sync].map(|paradigm| SpeedupRow {
                workers: p.workers,
                paradigm,
                mode,
                speedup: p.speedup(paradigm),
            })
        })
        .collect())
}

pub fn write_speedup_csv<W: Write>(rows: &[SpeedupRow], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
