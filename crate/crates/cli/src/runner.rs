use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use dana_core::sim::{run_simulation, write_metrics_csv, RunSummary};
use dana_core::{Algorithm, Objective};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::CliError;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Parallel runs; all available cores when unset.
    pub jobs: Option<usize>,
    /// Added to every configured seed.
    pub seed_offset: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunEntry {
    pub csv: String,
    #[serde(flatten)]
    pub summary: RunSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub generated_at_unix_ms: u128,
    pub config: ExperimentConfig,
    pub seed_offset: u64,
    pub runs: Vec<RunEntry>,
}

pub const SUMMARY_FILE: &str = "summary.json";

impl ExperimentReport {
    /// `(algorithm, workers)` cells in which every seed diverged.
    pub fn fully_diverged(&self) -> Vec<(Algorithm, usize)> {
        let mut cells: BTreeMap<(String, usize), (Algorithm, bool)> = BTreeMap::new();
        for r in &self.runs {
            let s = &r.summary;
            let cell = cells
                .entry((s.algorithm.name().to_owned(), s.workers))
                .or_insert((s.algorithm, true));
            cell.1 &= s.diverged;
        }
        cells
            .into_iter()
            .filter(|(_, (_, all))| *all)
            .map(|((_, n), (a, _))| (a, n))
            .collect()
    }

    /// 1 when some cell diverged in all seeds, 0 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.fully_diverged().is_empty() {
            0
        } else {
            1
        }
    }
}

pub fn csv_name(algorithm: Algorithm, workers: usize, seed: u64) -> String {
    format!("{algorithm}_n{workers}_seed{seed}.csv")
}

/// Runs every (algorithm, workers, seed) combination, writing one metrics CSV
/// per run and a `summary.json` into `options.out_dir`.
pub fn run_experiment(
    config: &ExperimentConfig,
    options: &RunOptions,
) -> Result<ExperimentReport, CliError> {
    config.validate()?;
    let spec = config
        .objective
        .as_ref()
        .expect("validated config has an objective");
    let seeds: Vec<u64> = config
        .seeds
        .iter()
        .map(|s| {
            s.checked_add(options.seed_offset)
                .ok_or_else(|| CliError::Config("seed_offset: seed overflows".into()))
        })
        .collect::<Result<_, _>>()?;

    // Build every objective up front so bad data fails before any run starts.
    let objectives: BTreeMap<u64, (Objective, Objective)> = seeds
        .iter()
        .map(|&s| spec.build(s).map(|o| (s, o)))
        .collect::<Result<_, _>>()?;
    let mut jobs = Vec::new();
    for &algorithm in &config.algorithms {
        for &workers in &config.workers {
            for &seed in &seeds {
                let sim = config.sim_config(algorithm, workers, seed, &objectives[&seed]);
                sim.validate()
                    .map_err(|e| CliError::Config(e.to_string()))?;
                jobs.push(sim);
            }
        }
    }

    std::fs::create_dir_all(&options.out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let runs = pool.install(|| {
        jobs.into_par_iter()
            .map(|sim| run_one(sim, &options.out_dir))
            .collect::<Result<Vec<_>, _>>()
    })?;

    let report = ExperimentReport {
        generated_at_unix_ms: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0),
        config: config.clone(),
        seed_offset: options.seed_offset,
        runs,
    };
    let file = File::create(options.out_dir.join(SUMMARY_FILE))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &report).map_err(std::io::Error::from)?;
    Ok(report)
}

fn run_one(sim: dana_core::SimConfig, out_dir: &Path) -> Result<RunEntry, CliError> {
    let name = csv_name(sim.algorithm, sim.workers, sim.seed);
    let output = run_simulation(sim).map_err(|e| CliError::Runtime(format!("{name}: {e}")))?;
    let file = File::create(out_dir.join(&name))?;
    write_metrics_csv(&output.records, BufWriter::new(file))?;
    Ok(RunEntry {
        csv: name,
        summary: output.summary,
    })
}
