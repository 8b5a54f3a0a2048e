//! Gamma-distributed batch execution times (the CVB model) and the
//! asynchronous-vs-synchronous speedup model built on it.
//!
//! Shapes come from coefficients of variation, `alpha = 1 / V^2`; a gamma
//! draw `G(alpha, m / alpha)` has mean `m`.
//!
//! * Homogeneous machines: a task mean `q` around `mu`, then each execution
//!   `G(alpha_mach, q / alpha_mach)`.
//! * Heterogeneous machines: every machine draws its own mean
//!   `p[j] = G(alpha_mach, mu / alpha_mach)` once, then each execution is
//!   `G(alpha_task, p[j] / alpha_task)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::{gamma_draw, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Environment {
    Homogeneous,
    Heterogeneous,
}

/// How the homogeneous task mean `q` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskTemplate {
    /// `q = mu`: every batch is the same task, at its expected duration.
    #[default]
    Expected,
    /// `q` drawn once per run.
    PerRun,
    /// `q` drawn independently for every execution.
    PerTask,
}

/// How the overall mean execution time follows from the batch size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanRule {
    /// Mean of `B` time units.
    #[default]
    BatchSize,
    /// The raw CVB setting `mu = B * V_mach^2`.
    CvbFormula,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecTimeModel {
    pub environment: Environment,
    pub v_task: f64,
    pub v_mach: f64,
    pub batch_size: usize,
    #[serde(default)]
    pub task_template: TaskTemplate,
    #[serde(default)]
    pub mean_rule: MeanRule,
}

impl ExecTimeModel {
    pub const V_TASK: f64 = 0.1;
    pub const V_MACH_HOMOGENEOUS: f64 = 0.1;
    pub const V_MACH_HETEROGENEOUS: f64 = 0.6;

    pub fn homogeneous(batch_size: usize) -> Self {
        Self {
            environment: Environment::Homogeneous,
            v_task: Self::V_TASK,
            v_mach: Self::V_MACH_HOMOGENEOUS,
            batch_size,
            task_template: TaskTemplate::Expected,
            mean_rule: MeanRule::BatchSize,
        }
    }

    pub fn heterogeneous(batch_size: usize) -> Self {
        Self {
            environment: Environment::Heterogeneous,
            v_mach: Self::V_MACH_HETEROGENEOUS,
            ..Self::homogeneous(batch_size)
        }
    }

    pub fn for_environment(environment: Environment, batch_size: usize) -> Self {
        match environment {
            Environment::Homogeneous => Self::homogeneous(batch_size),
            Environment::Heterogeneous => Self::heterogeneous(batch_size),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_task.is_finite() && self.v_task > 0.0) {
            return Err(invalid("v_task", "must be positive"));
        }
        if !(self.v_mach.is_finite() && self.v_mach > 0.0) {
            return Err(invalid("v_mach", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be positive"));
        }
        Ok(())
    }

    /// Marginal mean execution time `mu`.
    pub fn mean_time(&self) -> f64 {
        let b = self.batch_size as f64;
        match self.mean_rule {
            MeanRule::BatchSize => b,
            MeanRule::CvbFormula => b * self.v_mach * self.v_mach,
        }
    }

    pub fn alpha_task(&self) -> f64 {
        1.0 / (self.v_task * self.v_task)
    }

    pub fn alpha_mach(&self) -> f64 {
        1.0 / (self.v_mach * self.v_mach)
    }

    /// Draw the per-run state (machine means, task template) for `machines`.
    pub fn instantiate(&self, machines: usize, rng: &mut SeededRng) -> Result<ExecTimeSampler> {
        self.validate()?;
        if machines == 0 {
            return Err(invalid("machines", "need at least one machine"));
        }
        let mu = self.mean_time();
        let (machine_means, template_mean) = match self.environment {
            Environment::Homogeneous => {
                let q = match self.task_template {
                    TaskTemplate::PerRun => {
                        gamma_draw(rng, self.alpha_task(), mu / self.alpha_task())?
                    }
                    TaskTemplate::Expected | TaskTemplate::PerTask => mu,
                };
                (vec![q; machines], q)
            }
            Environment::Heterogeneous => {
                let alpha = self.alpha_mach();
                let means = (0..machines)
                    .map(|_| gamma_draw(rng, alpha, mu / alpha))
                    .collect::<Result<Vec<_>>>()?;
                (means, mu)
            }
        };
        Ok(ExecTimeSampler {
            model: *self,
            machine_means,
            template_mean,
        })
    }
}

/// An execution-time model with its per-run draws fixed.
#[derive(Debug, Clone)]
pub struct ExecTimeSampler {
    model: ExecTimeModel,
    machine_means: Vec<f64>,
    template_mean: f64,
}

impl ExecTimeSampler {
    pub fn model(&self) -> &ExecTimeModel {
        &self.model
    }

    pub fn machines(&self) -> usize {
        self.machine_means.len()
    }

    /// Expected execution time on `machine` given the per-run draws.
    pub fn machine_mean(&self, machine: usize) -> f64 {
        self.machine_means[machine]
    }

    pub fn sample(&self, machine: usize, rng: &mut SeededRng) -> Result<f64> {
        if machine >= self.machine_means.len() {
            return Err(invalid(
                "machine",
                format!(
                    "{machine} out of range for {} machines",
                    self.machine_means.len()
                ),
            ));
        }
        match self.model.environment {
            Environment::Homogeneous => {
                let alpha_task = self.model.alpha_task();
                let q = match self.model.task_template {
                    TaskTemplate::PerTask => {
                        gamma_draw(rng, alpha_task, self.template_mean / alpha_task)?
                    }
                    TaskTemplate::Expected | TaskTemplate::PerRun => self.template_mean,
                };
                let alpha = self.model.alpha_mach();
                gamma_draw(rng, alpha, q / alpha)
            }
            Environment::Heterogeneous => {
                let alpha = self.model.alpha_task();
                gamma_draw(rng, alpha, self.machine_means[machine] / alpha)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Paradigm {
    Async,
    Sync,
}

/// Throughput of `N` workers relative to one worker, for both paradigms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedupPoint {
    pub workers: usize,
    pub async_speedup: f64,
    pub sync_speedup: f64,
    /// Mean synchronous iteration time: the slowest of `N` batches.
    pub sync_iteration_time: f64,
}

impl SpeedupPoint {
    pub fn speedup(&self, paradigm: Paradigm) -> f64 {
        match paradigm {
            Paradigm::Async => self.async_speedup,
            Paradigm::Sync => self.sync_speedup,
        }
    }

    pub fn async_over_sync(&self) -> f64 {
        self.async_speedup / self.sync_speedup
    }
}

/// Iterations simulated per cluster draw when machines differ.
const ITERATIONS_PER_CLUSTER: usize = 100;

/// Monte-Carlo speedup model; communication is not modeled.
///
/// Every machine of a cluster runs `iterations` batches, giving its realized
/// mean time `m_j`. Asynchronous workers never wait, so cluster throughput is
/// `sum_j 1 / m_j`. A synchronous iteration lasts as long as its slowest
/// batch and yields `N` batches. Both paradigms are normalized by the same
/// single-worker throughput, `mean_j 1 / m_j`, so `N = 1` gives exactly one
/// for both. Heterogeneous clusters are redrawn every `ITERATIONS_PER_CLUSTER`
/// iterations and throughputs summed across draws. Cluster `c` uses stream
/// `c` of `seed`, so points for different `N` share their leading machines.
pub fn speedup_point(
    model: &ExecTimeModel,
    workers: usize,
    iterations: usize,
    seed: u64,
) -> Result<SpeedupPoint> {
    model.validate()?;
    if workers == 0 {
        return Err(invalid("workers", "need at least one worker"));
    }
    if iterations == 0 {
        return Err(invalid("iterations", "need at least one iteration"));
    }
    let machines_vary = model.environment == Environment::Heterogeneous
        || model.task_template == TaskTemplate::PerRun;
    let clusters = if machines_vary {
        (iterations / ITERATIONS_PER_CLUSTER).max(1)
    } else {
        1
    };
    let per_cluster = (iterations / clusters).max(1);

    let (mut async_tp, mut sync_tp, mut single_tp) = (0.0, 0.0, 0.0);
    let mut iteration_time = 0.0;
    let mut totals = vec![0.0; workers];
    for c in 0..clusters {
        let mut rng = SeededRng::new(seed, c as u64);
        let sampler = model.instantiate(workers, &mut rng)?;
        totals.iter_mut().for_each(|t| *t = 0.0);
        let mut max_sum = 0.0;
        for _ in 0..per_cluster {
            let mut slowest: f64 = 0.0;
            for (j, total) in totals.iter_mut().enumerate() {
                let t = sampler.sample(j, &mut rng)?;
                *total += t;
                slowest = slowest.max(t);
            }
            max_sum += slowest;
        }
        let mean_max = max_sum / per_cluster as f64;
        let cluster_async: f64 = totals.iter().map(|t| 1.0 / (t / per_cluster as f64)).sum();
        async_tp += cluster_async;
        single_tp += cluster_async / workers as f64;
        sync_tp += workers as f64 / mean_max;
        iteration_time += mean_max;
    }
    Ok(SpeedupPoint {
        workers,
        async_speedup: async_tp / single_tp,
        sync_speedup: sync_tp / single_tp,
        sync_iteration_time: iteration_time / clusters as f64,
    })
}

pub fn speedup_model(
    model: &ExecTimeModel,
    workers: usize,
    paradigm: Paradigm,
    iterations: usize,
    seed: u64,
) -> Result<f64> {
    speedup_point(model, workers, iterations, seed).map(|p| p.speedup(paradigm))
}
