//! Seeded, stream-split random number generation.
//!
//! A run has one root seed. Every consumer (data generation, execution-time
//! model, each worker's batch sampler) gets its own ChaCha stream, so adding
//! workers never perturbs the draws seen by unrelated consumers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{invalid, Result};

/// Stream ids reserved for the non-worker consumers.
pub mod streams {
    pub const TRAIN_DATA: u64 = 0;
    pub const EVAL_DATA: u64 = 1;
    pub const EXEC_TIME: u64 = 2;
    pub const INIT_PARAMS: u64 = 3;
    const WORKER_BASE: u64 = 1 << 20;
    const WORKER_EXEC_BASE: u64 = 2 << 20;

    /// Batch sampling for one worker.
    pub fn worker(id: usize) -> u64 {
        WORKER_BASE + id as u64
    }

    /// Execution-time draws for one worker.
    pub fn worker_exec(id: usize) -> u64 {
        WORKER_EXEC_BASE + id as u64
    }
}

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn gamma(&mut self, shape: f64, scale: f64) -> Result<f64> {
        gamma_draw(self, shape, scale)
    }

    /// Fisher-Yates shuffle driven by this stream.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// One draw from `Gamma(shape, scale)`, mean `shape * scale`.
pub fn gamma_draw(rng: &mut SeededRng, shape: f64, scale: f64) -> Result<f64> {
    if !(shape.is_finite() && shape > 0.0) {
        return Err(invalid("shape", format!("must be positive, got {shape}")));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(invalid("scale", format!("must be positive, got {scale}")));
    }
    let dist = Gamma::new(shape, scale).map_err(|e| invalid("gamma", e.to_string()))?;
    Ok(dist.sample(&mut rng.inner))
}
