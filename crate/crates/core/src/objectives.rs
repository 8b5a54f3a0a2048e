//! Desk-scale training objectives and datasets.
//!
//! Three model families stand in for the convolutional networks of a full-size
//! run: a separable quadratic bowl (optionally with per-sample centers to make
//! its gradients stochastic), multinomial logistic regression, and a one
//! hidden layer tanh MLP. All losses are batch means plus a coupled
//! `weight_decay / 2 * |theta|^2` term.

use std::io::Read;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::SeededRng;
use crate::vector::ParamVector;

/// Largest hidden layer the MLP accepts.
pub const MAX_HIDDEN: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    num_classes: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_samples: usize,
    pub dim: usize,
    pub num_classes: usize,
    pub separation: f64,
}

impl Dataset {
    /// `features` is row-major, `labels.len()` rows of `dim` columns.
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        dim: usize,
        num_classes: usize,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Dataset("dataset has no samples".into()));
        }
        if dim == 0 {
            return Err(Error::Dataset("feature dimension must be positive".into()));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::Dataset(format!(
                "expected {} feature values for {} samples of dimension {dim}, got {}",
                labels.len() * dim,
                labels.len(),
                features.len()
            )));
        }
        if num_classes < 2 {
            return Err(Error::Dataset("need at least two classes".into()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Dataset(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::Dataset("non-finite feature value".into()));
        }
        Ok(Self {
            dim,
            num_classes,
            features,
            labels,
        })
    }

    /// Gaussian class clusters with unit within-class variance.
    ///
    /// When `num_classes <= dim` the class centers sit on scaled coordinate
    /// axes so every pair is exactly `separation` apart; otherwise centers are
    /// random directions at the same radius. Labels are assigned round-robin
    /// (balanced within one) and the sample order is shuffled.
    pub fn gen_synthetic(rng: &mut SeededRng, spec: &SyntheticSpec) -> Result<Self> {
        let SyntheticSpec {
            num_samples,
            dim,
            num_classes,
            separation,
        } = *spec;
        if num_classes < 2 {
            return Err(invalid("num_classes", "must be at least 2"));
        }
        if num_samples < num_classes {
            return Err(invalid("num_samples", "must be at least num_classes"));
        }
        if dim == 0 {
            return Err(invalid("dim", "must be positive"));
        }
        if !(separation.is_finite() && separation >= 0.0) {
            return Err(invalid("separation", "must be finite and non-negative"));
        }

        let radius = separation / std::f64::consts::SQRT_2;
        let mut centers = vec![0.0; num_classes * dim];
        for c in 0..num_classes {
            let row = &mut centers[c * dim..(c + 1) * dim];
            if num_classes <= dim {
                row[c] = radius;
            } else {
                let mut norm = 0.0;
                for x in row.iter_mut() {
                    *x = rng.normal();
                    norm += *x * *x;
                }
                let norm = norm.sqrt().max(f64::MIN_POSITIVE);
                row.iter_mut().for_each(|x| *x *= radius / norm);
            }
        }

        let mut labels: Vec<usize> = (0..num_samples).map(|i| i % num_classes).collect();
        rng.shuffle(&mut labels);
        let mut features = Vec::with_capacity(num_samples * dim);
        for &label in &labels {
            for j in 0..dim {
                features.push(centers[label * dim + j] + rng.normal());
            }
        }
        Self::new(features, labels, dim, num_classes)
    }

    /// Reads a CSV with a header row; the last column is an integer class id
    /// and the remaining columns are features. The class count is one more
    /// than the largest label unless given explicitly.
    pub fn from_csv<R: Read>(reader: R, num_classes: Option<usize>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let width = rdr
            .headers()
            .map_err(|e| Error::Dataset(e.to_string()))?
            .len();
        if width < 2 {
            return Err(Error::Dataset(
                "need at least one feature column and a label column".into(),
            ));
        }
        let dim = width - 1;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::Dataset(e.to_string()))?;
            if record.len() != width {
                return Err(Error::Dataset(format!(
                    "row {} has {} columns, expected {width}",
                    line + 2,
                    record.len()
                )));
            }
            for field in record.iter().take(dim) {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Dataset(format!("row {}: bad feature `{field}`", line + 2))
                })?;
                features.push(v);
            }
            let raw = record[dim].trim();
            let label: usize = raw
                .parse()
                .map_err(|_| Error::Dataset(format!("row {}: bad label `{raw}`", line + 2)))?;
            labels.push(label);
        }
        let classes = match num_classes {
            Some(c) => c,
            None => labels.iter().max().map_or(0, |m| m + 1).max(2),
        };
        Self::new(features, labels, dim, classes)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Quadratic,
    Logistic,
    Mlp,
}

#[derive(Debug, Clone)]
enum Model {
    /// Per-sample loss `1/2 sum_d a_d (theta_d - c_{xi,d})^2`.
    Quadratic {
        curvature: Arc<Vec<f64>>,
        centers: Arc<Vec<f64>>,
        count: usize,
    },
    Logistic {
        data: Arc<Dataset>,
    },
    Mlp {
        data: Arc<Dataset>,
        hidden: usize,
    },
}

#[derive(Debug, Clone)]
pub struct Objective {
    model: Model,
    weight_decay: f64,
}

impl Objective {
    /// `1/2 |theta|^2` with a single sample at the origin.
    pub fn bowl(dim: usize) -> Self {
        Self::quadratic(vec![1.0; dim], vec![0.0; dim], 1).expect("valid bowl")
    }

    /// Deterministic quadratic `1/2 theta^T diag(a) theta`.
    pub fn diagonal_quadratic(curvature: Vec<f64>) -> Result<Self> {
        let dim = curvature.len();
        Self::quadratic(curvature, vec![0.0; dim], 1)
    }

    /// Quadratic with `count` per-sample centers stored row-major.
    pub fn quadratic(curvature: Vec<f64>, centers: Vec<f64>, count: usize) -> Result<Self> {
        if curvature.is_empty() {
            return Err(invalid("curvature", "dimension must be positive"));
        }
        if curvature.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(invalid(
                "curvature",
                "entries must be finite and non-negative",
            ));
        }
        if count == 0 || centers.len() != count * curvature.len() {
            return Err(invalid(
                "centers",
                "need `count` rows of the curvature dimension",
            ));
        }
        if centers.iter().any(|c| !c.is_finite()) {
            return Err(invalid("centers", "non-finite center"));
        }
        Ok(Self {
            model: Model::Quadratic {
                curvature: Arc::new(curvature),
                centers: Arc::new(centers),
                count,
            },
            weight_decay: 0.0,
        })
    }

    /// Quadratic whose per-sample centers are `N(0, noise^2)` draws, making
    /// mini-batch gradients noisy around the full-batch gradient.
    pub fn noisy_quadratic(
        rng: &mut SeededRng,
        curvature: Vec<f64>,
        num_samples: usize,
        noise: f64,
    ) -> Result<Self> {
        if !(noise.is_finite() && noise >= 0.0) {
            return Err(invalid("noise", "must be finite and non-negative"));
        }
        let dim = curvature.len();
        let centers = (0..num_samples * dim)
            .map(|_| noise * rng.normal())
            .collect();
        Self::quadratic(curvature, centers, num_samples)
    }

    pub fn logistic(data: Arc<Dataset>) -> Self {
        Self {
            model: Model::Logistic { data },
            weight_decay: 0.0,
        }
    }

    pub fn mlp(data: Arc<Dataset>, hidden: usize) -> Result<Self> {
        if hidden == 0 || hidden > MAX_HIDDEN {
            return Err(invalid("hidden", format!("must be in 1..={MAX_HIDDEN}")));
        }
        Ok(Self {
            model: Model::Mlp { data, hidden },
            weight_decay: 0.0,
        })
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    /// Same architecture evaluated on another dataset (for held-out loss).
    /// Quadratics ignore the dataset; use [`Objective::with_centers`].
    pub fn with_dataset(&self, data: Arc<Dataset>) -> Result<Self> {
        let model = match &self.model {
            Model::Quadratic { .. } => {
                return Err(invalid("dataset", "quadratic objectives use centers"))
            }
            Model::Logistic { data: old } => {
                check_compatible(old, &data)?;
                Model::Logistic { data }
            }
            Model::Mlp { data: old, hidden } => {
                check_compatible(old, &data)?;
                Model::Mlp {
                    data,
                    hidden: *hidden,
                }
            }
        };
        Ok(Self {
            model,
            weight_decay: self.weight_decay,
        })
    }

    pub fn with_centers(&self, centers: Vec<f64>, count: usize) -> Result<Self> {
        match &self.model {
            Model::Quadratic { curvature, .. } => {
                Ok(Self::quadratic(curvature.as_ref().clone(), centers, count)?
                    .with_weight_decay(self.weight_decay))
            }
            _ => Err(invalid("centers", "only quadratic objectives have centers")),
        }
    }

    pub fn kind(&self) -> ObjectiveKind {
        match self.model {
            Model::Quadratic { .. } => ObjectiveKind::Quadratic,
            Model::Logistic { .. } => ObjectiveKind::Logistic,
            Model::Mlp { .. } => ObjectiveKind::Mlp,
        }
    }

    pub fn weight_decay(&self) -> f64 {
        self.weight_decay
    }

    /// Parameter dimension `k`.
    pub fn dim(&self) -> usize {
        match &self.model {
            Model::Quadratic { curvature, .. } => curvature.len(),
            Model::Logistic { data } => data.num_classes * (data.dim + 1),
            Model::Mlp { data, hidden } => {
                hidden * (data.dim + 1) + data.num_classes * (hidden + 1)
            }
        }
    }

    pub fn num_samples(&self) -> usize {
        match &self.model {
            Model::Quadratic { count, .. } => *count,
            Model::Logistic { data } | Model::Mlp { data, .. } => data.len(),
        }
    }

    /// Gradient Lipschitz constant, where it is known analytically.
    pub fn lipschitz(&self) -> Option<f64> {
        match &self.model {
            Model::Quadratic { curvature, .. } => {
                Some(curvature.iter().fold(0.0_f64, |m, a| m.max(*a)) + self.weight_decay)
            }
            _ => None,
        }
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.num_samples()).collect()
    }

    /// Initial parameters: standard normal for the quadratic (its minimum is
    /// near the origin), zeros for logistic regression, and fan-in scaled
    /// normal weights for the MLP so its hidden units are not symmetric.
    pub fn init_params(&self, rng: &mut SeededRng) -> ParamVector {
        match &self.model {
            Model::Quadratic { curvature, .. } => ParamVector::from(
                (0..curvature.len())
                    .map(|_| rng.normal())
                    .collect::<Vec<_>>(),
            ),
            Model::Mlp { data, hidden } => {
                let mut p = ParamVector::zeros(self.dim());
                let (d, h) = (data.dim, *hidden);
                let w1 = (1.0 / d as f64).sqrt();
                let w2 = (1.0 / h as f64).sqrt();
                let s = p.as_mut_slice();
                for x in &mut s[..h * d] {
                    *x = w1 * rng.normal();
                }
                let off = h * d + h;
                for x in &mut s[off..off + data.num_classes * h] {
                    *x = w2 * rng.normal();
                }
                p
            }
            _ => ParamVector::zeros(self.dim()),
        }
    }

    fn check_batch(&self, params: &ParamVector, batch: &[usize]) -> Result<()> {
        if params.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: params.dim(),
            });
        }
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let len = self.num_samples();
        if let Some(&index) = batch.iter().find(|&&i| i >= len) {
            return Err(Error::IndexOutOfRange { index, len });
        }
        Ok(())
    }

    pub fn loss(&self, params: &ParamVector, batch: &[usize]) -> Result<f64> {
        self.check_batch(params, batch)?;
        let theta = params.as_slice();
        let mut total = 0.0;
        for &i in batch {
            total += self.sample_loss_grad(theta, i, None);
        }
        Ok(total / batch.len() as f64 + self.decay_loss(theta))
    }

    pub fn grad(&self, params: &ParamVector, batch: &[usize]) -> Result<ParamVector> {
        self.loss_and_grad(params, batch).map(|(_, g)| g)
    }

    /// Batch-mean loss and its gradient in one pass.
    pub fn loss_and_grad(
        &self,
        params: &ParamVector,
        batch: &[usize],
    ) -> Result<(f64, ParamVector)> {
        self.check_batch(params, batch)?;
        let theta = params.as_slice();
        let mut grad = vec![0.0; theta.len()];
        let mut total = 0.0;
        for &i in batch {
            total += self.sample_loss_grad(theta, i, Some(&mut grad));
        }
        let inv = 1.0 / batch.len() as f64;
        for (g, t) in grad.iter_mut().zip(theta) {
            *g = *g * inv + self.weight_decay * t;
        }
        Ok((
            total * inv + self.decay_loss(theta),
            ParamVector::from(grad),
        ))
    }

    /// Central-difference gradient, `(J(theta + h e_i) - J(theta - h e_i)) / 2h`.
    pub fn fd_grad(&self, params: &ParamVector, batch: &[usize], h: f64) -> Result<ParamVector> {
        if !(h.is_finite() && h > 0.0) {
            return Err(invalid("h", "step must be positive"));
        }
        self.check_batch(params, batch)?;
        let mut probe = params.clone();
        let mut out = Vec::with_capacity(params.dim());
        for i in 0..params.dim() {
            let x = params[i];
            probe.as_mut_slice()[i] = x + h;
            let up = self.loss(&probe, batch)?;
            probe.as_mut_slice()[i] = x - h;
            let down = self.loss(&probe, batch)?;
            probe.as_mut_slice()[i] = x;
            out.push((up - down) / (2.0 * h));
        }
        Ok(ParamVector::from(out))
    }

    /// Full-dataset mean loss.
    pub fn full_loss(&self, params: &ParamVector) -> Result<f64> {
        self.loss(params, &self.all_indices())
    }

    /// Fraction of samples classified correctly; `None` for quadratics.
    pub fn accuracy(&self, params: &ParamVector) -> Option<f64> {
        let data = match &self.model {
            Model::Quadratic { .. } => return None,
            Model::Logistic { data } | Model::Mlp { data, .. } => data,
        };
        let mut logits = vec![0.0; data.num_classes];
        let mut hidden = vec![0.0; MAX_HIDDEN];
        let correct = (0..data.len())
            .filter(|&i| {
                self.logits(params.as_slice(), i, &mut logits, &mut hidden);
                let pred = logits
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(c, _)| c)
                    .unwrap_or(0);
                pred == data.label(i)
            })
            .count();
        Some(correct as f64 / data.len() as f64)
    }

    fn decay_loss(&self, theta: &[f64]) -> f64 {
        if self.weight_decay == 0.0 {
            return 0.0;
        }
        0.5 * self.weight_decay * theta.iter().fold(0.0, |acc, t| acc + t * t)
    }

    fn logits(&self, theta: &[f64], i: usize, logits: &mut [f64], hidden: &mut [f64]) {
        match &self.model {
            Model::Quadratic { .. } => unreachable!("quadratic has no logits"),
            Model::Logistic { data } => {
                let (d, c) = (data.dim, data.num_classes);
                let x = data.row(i);
                let bias = &theta[c * d..];
                for k in 0..c {
                    let w = &theta[k * d..(k + 1) * d];
                    logits[k] = bias[k] + dot(w, x);
                }
            }
            Model::Mlp { data, hidden: h } => {
                let (d, h, c) = (data.dim, *h, data.num_classes);
                let x = data.row(i);
                let (w1, rest) = theta.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(c * h);
                for j in 0..h {
                    hidden[j] = (b1[j] + dot(&w1[j * d..(j + 1) * d], x)).tanh();
                }
                for k in 0..c {
                    logits[k] = b2[k] + dot(&w2[k * h..(k + 1) * h], &hidden[..h]);
                }
            }
        }
    }

    /// Loss of one sample; accumulates its gradient into `grad` when given.
    fn sample_loss_grad(&self, theta: &[f64], i: usize, grad: Option<&mut [f64]>) -> f64 {
        match &self.model {
            Model::Quadratic {
                curvature, centers, ..
            } => {
                let k = curvature.len();
                let c = &centers[i * k..(i + 1) * k];
                let mut loss = 0.0;
                match grad {
                    Some(g) => {
                        for d in 0..k {
                            let diff = theta[d] - c[d];
                            loss += curvature[d] * diff * diff;
                            g[d] += curvature[d] * diff;
                        }
                    }
                    None => {
                        for d in 0..k {
                            let diff = theta[d] - c[d];
                            loss += curvature[d] * diff * diff;
                        }
                    }
                }
                0.5 * loss
            }
            Model::Logistic { data } => {
                let (d, c) = (data.dim, data.num_classes);
                let mut logits = vec![0.0; c];
                self.logits(theta, i, &mut logits, &mut []);
                let y = data.label(i);
                let (loss, p) = softmax_xent(&logits, y);
                if let Some(g) = grad {
                    let x = data.row(i);
                    for k in 0..c {
                        let delta = p[k] - if k == y { 1.0 } else { 0.0 };
                        let w = &mut g[k * d..(k + 1) * d];
                        for (wj, xj) in w.iter_mut().zip(x) {
                            *wj += delta * xj;
                        }
                        g[c * d + k] += delta;
                    }
                }
                loss
            }
            Model::Mlp { data, hidden: h } => {
                let (d, h, c) = (data.dim, *h, data.num_classes);
                let mut hidden = [0.0; MAX_HIDDEN];
                let mut logits = vec![0.0; c];
                self.logits(theta, i, &mut logits, &mut hidden);
                let y = data.label(i);
                let (loss, p) = softmax_xent(&logits, y);
                if let Some(g) = grad {
                    let x = data.row(i);
                    let w2 = &theta[h * d + h..h * d + h + c * h];
                    let mut dh = [0.0; MAX_HIDDEN];
                    let w2_off = h * d + h;
                    let b2_off = w2_off + c * h;
                    for k in 0..c {
                        let delta = p[k] - if k == y { 1.0 } else { 0.0 };
                        for j in 0..h {
                            g[w2_off + k * h + j] += delta * hidden[j];
                            dh[j] += delta * w2[k * h + j];
                        }
                        g[b2_off + k] += delta;
                    }
                    for j in 0..h {
                        let dz = dh[j] * (1.0 - hidden[j] * hidden[j]);
                        let row = &mut g[j * d..(j + 1) * d];
                        for (wj, xj) in row.iter_mut().zip(x) {
                            *wj += dz * xj;
                        }
                        g[h * d + j] += dz;
                    }
                }
                loss
            }
        }
    }
}

fn check_compatible(old: &Dataset, new: &Dataset) -> Result<()> {
    if old.dim != new.dim || old.num_classes != new.num_classes {
        return Err(invalid(
            "dataset",
            format!(
                "shape ({}, {} classes) differs from model ({}, {} classes)",
                new.dim, new.num_classes, old.dim, old.num_classes
            ),
        ));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

/// Cross-entropy of `label` under softmax(logits); returns the loss and the
/// probabilities (written over a fresh buffer).
fn softmax_xent(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, z| m.max(*z));
    let mut probs: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= sum);
    let loss = sum.ln() + max - logits[label];
    (loss, probs)
}
