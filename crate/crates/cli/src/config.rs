//! Experiment configuration: a TOML document describing one run or a sweep
//! over algorithms, worker counts and seeds.
//!
//! ```toml
//! algorithm = ["dana_slim", "nag_asgd"]
//! workers = [1, 8, 16]
//! seeds = [0, 1, 2]
//! objective = "logistic"
//!
//! [exec_model]
//! environment = "heterogeneous"
//! ```

use std::path::PathBuf;
use std::sync::Arc;

use dana_core::exectime::{Environment, ExecTimeModel, MeanRule, TaskTemplate};
use dana_core::objectives::{Dataset, Objective, ObjectiveKind, SyntheticSpec};
use dana_core::rng::{streams, SeededRng};
use dana_core::{Algorithm, Schedule, SimConfig, Timing};
use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(
        rename = "algorithm",
        default,
        deserialize_with = "algorithms",
        skip_serializing_if = "Vec::is_empty"
    )]
    pub algorithms: Vec<Algorithm>,
    #[serde(
        default,
        deserialize_with = "one_or_many",
        skip_serializing_if = "Vec::is_empty"
    )]
    pub workers: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "yes")]
    pub momentum_correction: bool,
    #[serde(
        default,
        deserialize_with = "objective",
        skip_serializing_if = "Option::is_none"
    )]
    pub objective: Option<ObjectiveSpec>,
    #[serde(default)]
    pub exec_model: ExecModelSpec,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub speedup: SpeedupSpec,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_batch_size() -> usize {
    128
}
fn default_epochs() -> usize {
    10
}
fn default_eta() -> f64 {
    0.1
}
fn default_gamma() -> f64 {
    0.9
}
fn default_lambda() -> f64 {
    2.0
}
fn yes() -> bool {
    true
}

/// The objective and the data it is built from. Fields that do not apply to
/// the chosen kind are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Training samples `M`.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_eval_samples")]
    pub eval_samples: usize,
    #[serde(default)]
    pub weight_decay: f64,

    /// Explicit diagonal curvature; otherwise geometric from
    /// `curvature_max` down to `curvature_min`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curvature: Option<Vec<f64>>,
    #[serde(default = "default_curvature_max")]
    pub curvature_max: f64,
    #[serde(default = "default_curvature_min")]
    pub curvature_min: f64,
    /// Standard deviation of each sample's optimum around the origin.
    #[serde(default = "default_noise")]
    pub noise: f64,

    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    /// CSV training data instead of the synthetic generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// CSV held-out data; defaults to the training data when `data` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_data: Option<PathBuf>,
}

fn default_dim() -> usize {
    20
}
fn default_samples() -> usize {
    4096
}
fn default_eval_samples() -> usize {
    2048
}
fn default_curvature_max() -> f64 {
    0.1
}
fn default_curvature_min() -> f64 {
    0.01
}
fn default_noise() -> f64 {
    30.0
}
fn default_classes() -> usize {
    10
}
fn default_separation() -> f64 {
    3.0
}
fn default_hidden() -> usize {
    16
}

impl ObjectiveSpec {
    pub fn preset(kind: ObjectiveKind) -> Self {
        Self {
            kind,
            dim: default_dim(),
            samples: default_samples(),
            eval_samples: default_eval_samples(),
            weight_decay: 0.0,
            curvature: None,
            curvature_max: default_curvature_max(),
            curvature_min: default_curvature_min(),
            noise: default_noise(),
            classes: default_classes(),
            separation: default_separation(),
            hidden: default_hidden(),
            data: None,
            eval_data: None,
        }
    }

    pub fn curvature_values(&self) -> Vec<f64> {
        if let Some(c) = &self.curvature {
            return c.clone();
        }
        if self.dim <= 1 {
            return vec![self.curvature_max; self.dim];
        }
        let ratio = self.curvature_min / self.curvature_max;
        (0..self.dim)
            .map(|i| self.curvature_max * ratio.powf(i as f64 / (self.dim - 1) as f64))
            .collect()
    }

    /// Training and evaluation objectives for one seed.
    pub fn build(&self, seed: u64) -> Result<(Objective, Objective), CliError> {
        let mut train_rng = SeededRng::new(seed, streams::TRAIN_DATA);
        let mut eval_rng = SeededRng::new(seed, streams::EVAL_DATA);
        let wd = self.weight_decay;
        match self.kind {
            ObjectiveKind::Quadratic => {
                let curvature = self.curvature_values();
                let train = Objective::noisy_quadratic(
                    &mut train_rng,
                    curvature.clone(),
                    self.samples,
                    self.noise,
                )?;
                let eval = Objective::noisy_quadratic(
                    &mut eval_rng,
                    curvature,
                    self.eval_samples,
                    self.noise,
                )?;
                Ok((train.with_weight_decay(wd), eval.with_weight_decay(wd)))
            }
            ObjectiveKind::Logistic | ObjectiveKind::Mlp => {
                let (train, eval) = match &self.data {
                    Some(path) => {
                        let train = Arc::new(load_csv(path, None)?);
                        let eval = match &self.eval_data {
                            Some(p) => Arc::new(load_csv(p, Some(train.num_classes()))?),
                            None => Arc::clone(&train),
                        };
                        (train, eval)
                    }
                    None => {
                        let spec = SyntheticSpec {
                            num_samples: self.samples,
                            dim: self.dim,
                            num_classes: self.classes,
                            separation: self.separation,
                        };
                        let train = Dataset::gen_synthetic(&mut train_rng, &spec)?;
                        let eval = Dataset::gen_synthetic(
                            &mut eval_rng,
                            &SyntheticSpec {
                                num_samples: self.eval_samples,
                                ..spec
                            },
                        )?;
                        (Arc::new(train), Arc::new(eval))
                    }
                };
                let (train, eval) = if self.kind == ObjectiveKind::Logistic {
                    (Objective::logistic(train), Objective::logistic(eval))
                } else {
                    (
                        Objective::mlp(train, self.hidden)?,
                        Objective::mlp(eval, self.hidden)?,
                    )
                };
                Ok((train.with_weight_decay(wd), eval.with_weight_decay(wd)))
            }
        }
    }
}

fn load_csv(path: &PathBuf, classes: Option<usize>) -> Result<Dataset, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Config(format!("objective.data: {}: {e}", path.display())))?;
    Dataset::from_csv(file, classes)
        .map_err(|e| CliError::Config(format!("objective.data: {}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecEnvironment {
    #[default]
    Homogeneous,
    Heterogeneous,
    /// Constant batch time with staggered starts.
    RoundRobin,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecModelSpec {
    #[serde(default)]
    pub environment: ExecEnvironment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_task: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_mach: Option<f64>,
    #[serde(default)]
    pub task_template: TaskTemplate,
    #[serde(default)]
    pub mean_rule: MeanRule,
    /// Batch time for `round_robin`; defaults to the batch size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
}

impl ExecModelSpec {
    pub fn gamma_model(&self, environment: Environment, batch_size: usize) -> ExecTimeModel {
        let mut model = ExecTimeModel::for_environment(environment, batch_size);
        if let Some(v) = self.v_task {
            model.v_task = v;
        }
        if let Some(v) = self.v_mach {
            model.v_mach = v;
        }
        model.task_template = self.task_template;
        model.mean_rule = self.mean_rule;
        model
    }

    pub fn timing(&self, batch_size: usize) -> Timing {
        match self.environment {
            ExecEnvironment::Homogeneous => {
                Timing::Gamma(self.gamma_model(Environment::Homogeneous, batch_size))
            }
            ExecEnvironment::Heterogeneous => {
                Timing::Gamma(self.gamma_model(Environment::Heterogeneous, batch_size))
            }
            ExecEnvironment::RoundRobin => Timing::RoundRobin {
                period: self.period.unwrap_or(batch_size as f64),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    #[serde(default = "default_warmup")]
    pub warmup_epochs: f64,
    #[serde(default = "default_decay_factor")]
    pub decay_factor: f64,
    #[serde(default)]
    pub decay_epochs: Vec<f64>,
}

fn default_warmup() -> f64 {
    5.0
}
fn default_decay_factor() -> f64 {
    0.1
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            warmup_epochs: default_warmup(),
            decay_factor: default_decay_factor(),
            decay_epochs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedupSpec {
    #[serde(default = "default_speedup_workers")]
    pub workers: Vec<usize>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_environments")]
    pub environments: Vec<Environment>,
}

fn default_speedup_workers() -> Vec<usize> {
    vec![1, 2, 4, 8, 16, 32, 64, 128]
}
fn default_iterations() -> usize {
    100_000
}
fn default_environments() -> Vec<Environment> {
    vec![Environment::Homogeneous, Environment::Heterogeneous]
}

impl Default for SpeedupSpec {
    fn default() -> Self {
        Self {
            workers: default_speedup_workers(),
            iterations: default_iterations(),
            environments: default_environments(),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> From<OneOrMany<T>> for Vec<T> {
    fn from(v: OneOrMany<T>) -> Self {
        match v {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(xs) => xs,
        }
    }
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<usize>, D::Error> {
    Ok(OneOrMany::<usize>::deserialize(d)?.into())
}

fn algorithms<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Algorithm>, D::Error> {
    let names: Vec<String> = OneOrMany::<String>::deserialize(d)?.into();
    names
        .iter()
        .map(|n| {
            Algorithm::from_name(n)
                .ok_or_else(|| de::Error::custom(format!("unsupported algorithm `{n}`")))
        })
        .collect()
}

fn objective<'de, D: Deserializer<'de>>(d: D) -> Result<Option<ObjectiveSpec>, D::Error> {
    match toml::Value::deserialize(d)? {
        toml::Value::String(name) => {
            let kind = ObjectiveKind::deserialize(toml::Value::String(name.clone()))
                .map_err(|_| de::Error::custom(format!("unsupported objective `{name}`")))?;
            Ok(Some(ObjectiveSpec::preset(kind)))
        }
        table @ toml::Value::Table(_) => ObjectiveSpec::deserialize(table)
            .map(Some)
            .map_err(de::Error::custom),
        other => Err(de::Error::custom(format!(
            "expected an objective name or table, found {}",
            other.type_str()
        ))),
    }
}

fn config_err(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

/// Parses and validates a run configuration.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let config = parse_document(text)?;
    config.validate()?;
    Ok(config)
}

/// Parses a configuration for the speedup table, which only needs the
/// execution-model and speedup sections.
pub fn parse_speedup_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let config = parse_document(text)?;
    config.validate_speedup()?;
    Ok(config)
}

fn parse_document(text: &str) -> Result<ExperimentConfig, CliError> {
    toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_owned()))
}

/// Serializes a configuration back to TOML.
pub fn emit_config(config: &ExperimentConfig) -> String {
    toml::to_string(config).expect("configuration is always representable as TOML")
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.algorithms.is_empty() {
            return Err(config_err("algorithm", "missing"));
        }
        if self.workers.is_empty() {
            return Err(config_err("workers", "missing"));
        }
        if let Some(&n) = self.workers.iter().find(|&&n| n < 1) {
            return Err(config_err(
                "workers",
                format!("must be at least 1, got {n}"),
            ));
        }
        if self.algorithms.contains(&Algorithm::SequentialNag)
            && self.workers.iter().any(|&n| n != 1)
        {
            return Err(config_err("workers", "sequential_nag requires workers = 1"));
        }
        let objective = self
            .objective
            .as_ref()
            .ok_or_else(|| config_err("objective", "missing"))?;
        if self.seeds.is_empty() {
            return Err(config_err("seeds", "need at least one seed"));
        }
        if self.epochs == 0 {
            return Err(config_err("epochs", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(config_err("batch_size", "must be positive"));
        }
        if objective.data.is_none() && objective.samples < self.batch_size {
            return Err(config_err(
                "objective.samples",
                "fewer samples than one batch",
            ));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(config_err("eta", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(config_err("gamma", "must lie in [0, 1)"));
        }
        if !self.lambda.is_finite() {
            return Err(config_err("lambda", "must be finite"));
        }
        if let Some(c) = &objective.curvature {
            if c.len() != objective.dim {
                return Err(config_err("objective.curvature", "length must equal dim"));
            }
        }
        for &n in &self.workers {
            self.schedule(n)
                .validate()
                .map_err(|e| config_err("schedule", e))?;
        }
        match self.exec_model.timing(self.batch_size) {
            Timing::Gamma(model) => model.validate().map_err(|e| config_err("exec_model", e))?,
            Timing::RoundRobin { period } => {
                if !(period.is_finite() && period > 0.0) {
                    return Err(config_err("exec_model.period", "must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn validate_speedup(&self) -> Result<(), CliError> {
        if self.speedup.workers.is_empty() || self.speedup.workers.contains(&0) {
            return Err(config_err(
                "speedup.workers",
                "need worker counts of at least 1",
            ));
        }
        if self.speedup.iterations == 0 {
            return Err(config_err("speedup.iterations", "must be positive"));
        }
        if self.speedup.environments.is_empty() {
            return Err(config_err(
                "speedup.environments",
                "need at least one environment",
            ));
        }
        for &env in &self.speedup.environments {
            self.exec_model
                .gamma_model(env, self.batch_size)
                .validate()
                .map_err(|e| config_err("exec_model", e))?;
        }
        Ok(())
    }

    pub fn schedule(&self, workers: usize) -> Schedule {
        Schedule {
            base_eta: self.eta,
            warmup_epochs: self.schedule.warmup_epochs,
            num_workers: workers,
            decay_factor: self.schedule.decay_factor,
            decay_epochs: self.schedule.decay_epochs.clone(),
            gamma: self.gamma,
        }
    }

    /// Simulation settings for one sweep entry, given that seed's objectives.
    pub fn sim_config(
        &self,
        algorithm: Algorithm,
        workers: usize,
        seed: u64,
        objectives: &(Objective, Objective),
    ) -> SimConfig {
        SimConfig {
            algorithm,
            workers,
            objective: objectives.0.clone(),
            eval_objective: Some(objectives.1.clone()),
            batch_size: self.batch_size,
            epochs: self.epochs,
            schedule: self.schedule(workers),
            lambda: self.lambda,
            momentum_correction: self.momentum_correction,
            timing: self.exec_model.timing(self.batch_size),
            seed,
            init: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config("algorithm = \"dana_slim\"\nworkers = 8\nobjective = \"quadratic\"\n")
            .unwrap();
        assert_eq!(c.algorithms, vec![Algorithm::DanaSlim]);
        assert_eq!(c.workers, vec![8]);
        assert_eq!(c.gamma, 0.9);
        assert_eq!(c.eta, 0.1);
        assert_eq!(c.batch_size, 128);
        assert_eq!(c.seeds, vec![0]);
        assert_eq!(c.objective.unwrap().kind, ObjectiveKind::Quadratic);
    }

    #[test]
    fn curvature_is_geometric() {
        let spec = ObjectiveSpec {
            dim: 3,
            curvature_max: 1.0,
            curvature_min: 0.01,
            ..ObjectiveSpec::preset(ObjectiveKind::Quadratic)
        };
        let c = spec.curvature_values();
        assert_eq!(c[0], 1.0);
        assert!((c[1] - 0.1).abs() < 1e-15);
        assert!((c[2] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn objective_table_rejects_unknown_keys() {
        let err = parse_config(
            "algorithm = \"asgd\"\nworkers = 1\n[objective]\nkind = \"mlp\"\nlayers = 3\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("layers"), "{err}");
    }
}
