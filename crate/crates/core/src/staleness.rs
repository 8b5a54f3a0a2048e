//! Staleness instrumentation: lag, gap, normalized gap and the Lipschitz
//! bound relating gradient error to the gap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::ParamVector;

/// One staleness observation, taken when a gradient reaches the master.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapSample {
    /// Master update count at receipt.
    pub step: u64,
    pub tau: u64,
    pub gap: f64,
    /// `None` when the gradient norm is zero.
    pub normalized_gap: Option<f64>,
    pub grad_norm: f64,
}

impl GapSample {
    pub fn new(step: u64, tau: u64, gap: f64, grad_norm: f64) -> Self {
        Self {
            step,
            tau,
            gap,
            normalized_gap: normalized_gap(gap, grad_norm),
            grad_norm,
        }
    }
}

/// RMSE of `master - worker`: `|master - worker|_2 / sqrt(k)`.
pub fn gap(master: &ParamVector, worker: &ParamVector) -> Result<f64> {
    master.check_dim(worker)?;
    if master.dim() == 0 {
        return Ok(0.0);
    }
    let sq = master
        .iter()
        .zip(worker.iter())
        .fold(0.0, |acc, (a, b)| acc + (a - b) * (a - b));
    Ok((sq / master.dim() as f64).sqrt())
}

/// `gap / grad_norm`, undefined when the gradient vanishes.
pub fn normalized_gap(gap: f64, grad_norm: f64) -> Option<f64> {
    if grad_norm > 0.0 && grad_norm.is_finite() {
        Some(gap / grad_norm)
    } else {
        None
    }
}

/// Updates the master applied between dispatch and receipt.
pub fn lag(dispatched_at: u64, current: u64) -> Result<u64> {
    current
        .checked_sub(dispatched_at)
        .ok_or(Error::NegativeLag {
            dispatched_at,
            current,
        })
}

/// One pair of parameter vectors and the full gradients at each.
#[derive(Debug, Clone)]
pub struct GradientPair {
    pub theta_a: ParamVector,
    pub theta_b: ParamVector,
    pub grad_a: ParamVector,
    pub grad_b: ParamVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub pairs: usize,
    pub violations: usize,
    /// Largest observed `|grad_a - grad_b| / (L * sqrt(k) * gap)`.
    pub max_ratio: f64,
}

impl LipschitzReport {
    pub fn violation_fraction(&self) -> f64 {
        if self.pairs == 0 {
            0.0
        } else {
            self.violations as f64 / self.pairs as f64
        }
    }
}

/// Checks `|grad(a) - grad(b)|_2 <= L * sqrt(k) * gap(a, b)` over every pair.
pub fn lipschitz_check<'a, I>(pairs: I, lipschitz: f64) -> Result<LipschitzReport>
where
    I: IntoIterator<Item = &'a GradientPair>,
{
    // Slack for rounding in the two norms.
    const REL_SLACK: f64 = 1e-12;
    let mut report = LipschitzReport {
        pairs: 0,
        violations: 0,
        max_ratio: 0.0,
    };
    for p in pairs {
        let k = p.theta_a.dim() as f64;
        let lhs = p.grad_a.sub(&p.grad_b)?.l2_norm();
        let bound = lipschitz * k.sqrt() * gap(&p.theta_a, &p.theta_b)?;
        report.pairs += 1;
        if lhs > bound * (1.0 + REL_SLACK) + f64::MIN_POSITIVE {
            report.violations += 1;
        }
        if bound > 0.0 {
            report.max_ratio = report.max_ratio.max(lhs / bound);
        }
    }
    Ok(report)
}

/// Append-only log of gap samples with per-epoch aggregation.
#[derive(Debug, Clone, Default)]
pub struct GapLog {
    samples: Vec<(usize, GapSample)>,
}

impl GapLog {
    pub fn push(&mut self, epoch: usize, sample: GapSample) {
        self.samples.push((epoch, sample));
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = &GapSample> {
        self.samples.iter().map(|(_, s)| s)
    }

    pub fn mean_gap(&self) -> Option<f64> {
        mean(self.samples.iter().map(|(_, s)| s.gap))
    }

    pub fn mean_normalized_gap(&self) -> Option<f64> {
        mean(self.samples.iter().filter_map(|(_, s)| s.normalized_gap))
    }

    pub fn mean_lag(&self) -> Option<f64> {
        mean(self.samples.iter().map(|(_, s)| s.tau as f64))
    }

    /// Mean gap of each epoch in order; epochs without samples are skipped.
    pub fn epoch_mean_gaps(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64, usize)> = Vec::new();
        for (epoch, s) in &self.samples {
            match out.last_mut() {
                Some((e, sum, n)) if e == epoch => {
                    *sum += s.gap;
                    *n += 1;
                }
                _ => out.push((*epoch, s.gap, 1)),
            }
        }
        out.into_iter()
            .map(|(e, sum, n)| (e, sum / n as f64))
            .collect()
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}
