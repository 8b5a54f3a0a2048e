//! Dense parameter vectors.
//!
//! Every quantity the optimizers and the parameter server exchange (parameters,
//! gradients, momenta, look-ahead estimates) is a flat `f64` vector of a fixed
//! dimension `k`. Reductions always run left to right so results are
//! bit-reproducible.

use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn filled(dim: usize, value: f64) -> Self {
        Self(vec![value; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn check_dim(&self, other: &ParamVector) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn ensure_finite(&self, context: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(context))
        }
    }

    /// Element-wise `a * x + b * y`.
    pub fn linear_combine(a: f64, x: &ParamVector, b: f64, y: &ParamVector) -> Result<ParamVector> {
        x.check_dim(y)?;
        Ok(ParamVector(
            x.0.iter()
                .zip(&y.0)
                .map(|(xi, yi)| a * xi + b * yi)
                .collect(),
        ))
    }

    /// In place `self <- self + a * x`.
    pub fn axpy(&mut self, a: f64, x: &ParamVector) -> Result<()> {
        self.check_dim(x)?;
        for (s, xi) in self.0.iter_mut().zip(&x.0) {
            *s += a * xi;
        }
        Ok(())
    }

    /// In place `self <- c * self + x`, the momentum recurrence.
    pub fn scale_add(&mut self, c: f64, x: &ParamVector) -> Result<()> {
        self.check_dim(x)?;
        for (s, xi) in self.0.iter_mut().zip(&x.0) {
            *s = c * *s + xi;
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        for s in &mut self.0 {
            *s *= c;
        }
    }

    pub fn scaled(&self, c: f64) -> ParamVector {
        ParamVector(self.0.iter().map(|x| c * x).collect())
    }

    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        Self::linear_combine(1.0, self, -1.0, other)
    }

    pub fn add(&self, other: &ParamVector) -> Result<ParamVector> {
        Self::linear_combine(1.0, self, 1.0, other)
    }

    pub fn dot(&self, other: &ParamVector) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .fold(0.0, |acc, (a, b)| acc + a * b))
    }

    /// Euclidean norm with a fixed left-to-right summation order.
    pub fn l2_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, x| acc + x * x).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |acc: f64, x| acc.max(x.abs()))
    }

    /// Largest element-wise absolute difference.
    pub fn max_abs_diff(&self, other: &ParamVector) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .fold(0.0, |acc: f64, (a, b)| acc.max((a - b).abs())))
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

impl From<&[f64]> for ParamVector {
    fn from(values: &[f64]) -> Self {
        Self(values.to_vec())
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}
