//! Learning-rate schedule with gradual warm-up and step decay, and the
//! momentum correction applied whenever the rate changes.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::vector::ParamVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub base_eta: f64,
    /// Warm-up length in epochs; the rate ramps linearly from `base_eta / N`.
    pub warmup_epochs: f64,
    pub num_workers: usize,
    pub decay_factor: f64,
    /// Epochs at which the rate is multiplied by `decay_factor`.
    pub decay_epochs: Vec<f64>,
    pub gamma: f64,
}

impl Schedule {
    /// Fixed rate, no warm-up, no decay.
    pub fn constant(eta: f64, gamma: f64) -> Self {
        Self {
            base_eta: eta,
            warmup_epochs: 0.0,
            num_workers: 1,
            decay_factor: 1.0,
            decay_epochs: Vec::new(),
            gamma,
        }
    }

    /// The ResNet-20/CIFAR-10 recipe: eta 0.1, 5 warm-up epochs, decay 0.1 at
    /// epochs 80 and 120.
    pub fn resnet20(num_workers: usize) -> Self {
        Self {
            base_eta: 0.1,
            warmup_epochs: 5.0,
            num_workers,
            decay_factor: 0.1,
            decay_epochs: vec![80.0, 120.0],
            gamma: 0.9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_eta.is_finite() && self.base_eta > 0.0) {
            return Err(invalid("eta", "must be positive"));
        }
        if !(self.warmup_epochs.is_finite() && self.warmup_epochs >= 0.0) {
            return Err(invalid("warmup_epochs", "must be non-negative"));
        }
        if self.num_workers == 0 {
            return Err(invalid("workers", "must be at least 1"));
        }
        if !(self.decay_factor.is_finite() && self.decay_factor > 0.0) {
            return Err(invalid("decay_factor", "must be positive"));
        }
        if self.decay_epochs.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid("decay_epochs", "must be sorted"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(invalid("gamma", "must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Learning rate at a (fractional) epoch.
    pub fn lr_at(&self, epoch: f64) -> f64 {
        let passed = self.decay_epochs.iter().filter(|&&e| epoch >= e).count();
        let decayed = self.base_eta * self.decay_factor.powi(passed as i32);
        if self.warmup_epochs > 0.0 && epoch < self.warmup_epochs {
            let start = 1.0 / self.num_workers as f64;
            decayed * (start + (1.0 - start) * epoch.max(0.0) / self.warmup_epochs)
        } else {
            decayed
        }
    }
}

/// Rescale a momentum buffer so `eta * v` is unchanged across a rate change.
pub fn momentum_correct(v: &ParamVector, eta_old: f64, eta_new: f64) -> Result<ParamVector> {
    if !(eta_old > 0.0 && eta_new > 0.0) {
        return Err(invalid(
            "eta",
            "rates must be positive for momentum correction",
        ));
    }
    Ok(v.scaled(eta_old / eta_new))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_starts_at_base_over_n() {
        let s = Schedule::resnet20(8);
        assert!((s.lr_at(0.0) - 0.0125).abs() < 1e-15);
        assert!((s.lr_at(2.5) - (0.0125 + 0.5 * 0.0875)).abs() < 1e-15);
        assert_eq!(s.lr_at(5.0), 0.1);
        assert_eq!(s.lr_at(79.9), 0.1);
    }

    #[test]
    fn step_decay() {
        let s = Schedule::resnet20(8);
        assert!((s.lr_at(80.0) - 0.01).abs() < 1e-15);
        assert!((s.lr_at(120.0) - 0.001).abs() < 1e-15);
    }

    #[test]
    fn single_worker_has_no_warmup_drop() {
        let s = Schedule::resnet20(1);
        assert_eq!(s.lr_at(0.0), 0.1);
    }

    #[test]
    fn validation() {
        assert!(Schedule::resnet20(8).validate().is_ok());
        let mut bad = Schedule::resnet20(8);
        bad.decay_epochs = vec![120.0, 80.0];
        assert!(bad.validate().is_err());
        assert!(Schedule::constant(0.0, 0.9).validate().is_err());
        assert!(Schedule::constant(0.1, 1.0).validate().is_err());
    }

    #[test]
    fn momentum_correction_examples() {
        let v = ParamVector::from(vec![1.0]);
        assert_eq!(momentum_correct(&v, 0.1, 0.1).unwrap(), v);
        let c = momentum_correct(&v, 0.1, 0.01).unwrap();
        assert!((c[0] - 10.0).abs() < 1e-12);
        assert!((0.01 * c[0] - 0.1 * v[0]).abs() < 1e-15);
        let z = ParamVector::zeros(3);
        assert_eq!(momentum_correct(&z, 0.5, 0.001).unwrap(), z);
        assert!(momentum_correct(&v, 0.0, 0.1).is_err());
    }
}
