//! Parameter-server protocols.
//!
//! The master applies one [`UpdateMessage`] at a time (FIFO, atomic) and
//! answers the sending worker with a [`Reply`] carrying the parameters that
//! worker should compute its next gradient on. The master rules differ in how
//! they fold the payload into their momentum buffers and in which parameters
//! they send back:
//!
//! | rule        | momentum            | reply                              |
//! |-------------|---------------------|------------------------------------|
//! | `Asgd`      | none                | `theta`                            |
//! | `NagAsgd`   | one shared `v`      | `theta`                            |
//! | `MultiAsgd` | `v^i` per worker    | `theta`                            |
//! | `DcAsgd`    | `v^i`, compensated  | `theta`                            |
//! | `Lwp`       | one shared `v`      | `theta - tau * eta * v`            |
//! | `DanaZero`  | `v^i` per worker    | `theta - eta * gamma * sum_j v^j`  |
//! | `DanaDc`    | `v^i`, compensated  | `theta - eta * gamma * sum_j v^j`  |
//!
//! DANA-Slim keeps the momentum on the worker ([`WorkerState::dana_slim_message`])
//! and pairs it with the plain `Asgd` master.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::objectives::Objective;
use crate::staleness;
use crate::vector::ParamVector;

/// Number of recent lags averaged for the LWP look-ahead distance.
pub const LWP_LAG_WINDOW: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MasterRule {
    Asgd,
    NagAsgd,
    MultiAsgd,
    DcAsgd,
    Lwp,
    DanaZero,
    DanaDc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MasterHyper {
    pub eta: f64,
    pub gamma: f64,
    /// Delay-compensation strength.
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateMessage {
    pub worker_id: usize,
    /// A raw gradient, or `gamma * v^i + g^i` for DANA-Slim workers.
    pub payload: ParamVector,
    /// Master update count when the worker received its parameters.
    pub dispatched_at: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub worker_id: usize,
    pub params: ParamVector,
    pub dispatched_at: u64,
}

#[derive(Debug, Clone)]
pub struct MasterState {
    rule: MasterRule,
    hyper: MasterHyper,
    theta: ParamVector,
    shared_momentum: ParamVector,
    per_worker_momentum: Vec<ParamVector>,
    aggregate_momentum: ParamVector,
    last_sent: Vec<ParamVector>,
    recent_lags: Vec<VecDeque<u64>>,
    update_count: u64,
}

impl MasterState {
    pub fn new(
        rule: MasterRule,
        theta0: ParamVector,
        num_workers: usize,
        hyper: MasterHyper,
    ) -> Result<Self> {
        if num_workers == 0 {
            return Err(invalid("num_workers", "need at least one worker"));
        }
        if !(hyper.eta.is_finite() && hyper.eta >= 0.0) {
            return Err(invalid("eta", "must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&hyper.gamma) {
            return Err(invalid("gamma", "must lie in [0, 1)"));
        }
        if !hyper.lambda.is_finite() {
            return Err(invalid("lambda", "must be finite"));
        }
        theta0.ensure_finite("initial parameters")?;
        let k = theta0.dim();
        Ok(Self {
            rule,
            hyper,
            shared_momentum: ParamVector::zeros(k),
            per_worker_momentum: vec![ParamVector::zeros(k); num_workers],
            aggregate_momentum: ParamVector::zeros(k),
            last_sent: vec![theta0.clone(); num_workers],
            recent_lags: vec![VecDeque::with_capacity(LWP_LAG_WINDOW); num_workers],
            theta: theta0,
            update_count: 0,
        })
    }

    pub fn rule(&self) -> MasterRule {
        self.rule
    }

    pub fn hyper(&self) -> MasterHyper {
        self.hyper
    }

    pub fn params(&self) -> &ParamVector {
        &self.theta
    }

    pub fn num_workers(&self) -> usize {
        self.per_worker_momentum.len()
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    pub fn shared_momentum(&self) -> &ParamVector {
        &self.shared_momentum
    }

    pub fn worker_momentum(&self, worker_id: usize) -> Result<&ParamVector> {
        self.per_worker_momentum
            .get(worker_id)
            .ok_or(Error::UnknownWorker(worker_id))
    }

    /// The incrementally maintained `v^0 = sum_i v^i`.
    pub fn aggregate_momentum(&self) -> &ParamVector {
        &self.aggregate_momentum
    }

    /// `sum_i v^i` recomputed from scratch, left to right.
    pub fn fresh_momentum_sum(&self) -> ParamVector {
        let mut sum = ParamVector::zeros(self.theta.dim());
        for v in &self.per_worker_momentum {
            sum.axpy(1.0, v)
                .expect("momenta share the parameter dimension");
        }
        sum
    }

    pub fn last_sent(&self, worker_id: usize) -> Result<&ParamVector> {
        self.last_sent
            .get(worker_id)
            .ok_or(Error::UnknownWorker(worker_id))
    }

    /// Running mean of the worker's recent lags, the LWP look-ahead distance.
    pub fn lag_estimate(&self, worker_id: usize) -> Result<f64> {
        let lags = self
            .recent_lags
            .get(worker_id)
            .ok_or(Error::UnknownWorker(worker_id))?;
        if lags.is_empty() {
            return Ok(0.0);
        }
        Ok(lags.iter().sum::<u64>() as f64 / lags.len() as f64)
    }

    /// Parameters to hand a worker before any update has been applied.
    pub fn initial_reply(&mut self, worker_id: usize) -> Result<Reply> {
        self.check_worker(worker_id)?;
        Ok(self.reply(worker_id))
    }

    /// Apply one message under this master's rule.
    pub fn apply(&mut self, msg: &UpdateMessage) -> Result<Reply> {
        match self.rule {
            MasterRule::Asgd => self.apply_asgd(msg),
            MasterRule::NagAsgd => self.apply_nag_asgd(msg),
            MasterRule::MultiAsgd => self.apply_multi(msg),
            MasterRule::DcAsgd => self.apply_dc(msg),
            MasterRule::Lwp => self.apply_lwp(msg),
            MasterRule::DanaZero => self.apply_dana_zero(msg),
            MasterRule::DanaDc => self.apply_dana_dc(msg),
        }
    }

    /// `theta <- theta - eta * g`; replies with `theta`.
    pub fn apply_asgd(&mut self, msg: &UpdateMessage) -> Result<Reply> {
        self.accept(msg)?;
        self.theta.axpy(-self.hyper.eta, &msg.payload)?;
        Ok(self.finish(msg.worker_id, ReplyKind::Current))
    }

    /// Single shared momentum buffer.
    pub fn apply_nag_asgd(&mut self, msg: &UpdateMessage) -> Result<Reply> {
        self.accept(msg)?;
        self.shared_momentum
            .scale_add(self.hyper.gamma, &msg.payload)?;
        self.theta.axpy(-self.hyper.eta, &self.shared_momentum)?;
        Ok(self.finish(msg.worker_id, ReplyKind::Current))
    }

    /// One momentum buffer per worker, updated only by that worker.
    pub fn apply_multi(&mut self, msg: &UpdateMessage) -> Result<Reply> {
        self.accept(msg)?;
        self.per_worker_step(msg.worker_id, &msg.payload)?;
        Ok(self.finish(msg.worker_id, ReplyKind::Current))
    }

    /// Multi-ASGD on the delay-compensated gradient
    /// `g + lambda * g * g * (theta - theta^i)`.
    pub fn apply_dc(&mut self, msg: &UpdateMessage) -> Result<Reply> {
        self.accept(msg)?;
        let compensated = self.compensate(msg)?;
        self.per_worker_step(msg.worker_id, &compensated)?;
        Ok(self.finish(msg.worker_id, ReplyKind::Current))
    }

    /// Shared momentum; replies with the linear prediction `theta - tau * eta * v`.
    pub fn apply_lwp(&mut self, msg: &UpdateMessage) -> Result<Reply> {
        self.accept(msg)?;
        self.shared_momentum
            .scale_add(self.hyper.gamma, &msg.payload)?;
        self.theta.axpy(-self.hyper.eta, &self.shared_momentum)?;
        Ok(self.finish(msg.worker_id, ReplyKind::LinearPrediction))
    }

    /// Per-worker momentum; replies with `theta - eta * gamma * v^0`.
    pub fn apply_dana_zero(&mut self, msg: &UpdateMessage) -> Result<Reply> {
        self.accept(msg)?;
        self.per_worker_step(msg.worker_id, &msg.payload)?;
        Ok(self.finish(msg.worker_id, ReplyKind::LookAhead))
    }

    /// DANA-Zero on the delay-compensated gradient. The compensation uses the
    /// previous reply to the worker, i.e. its look-ahead estimate.
    pub fn apply_dana_dc(&mut self, msg: &UpdateMessage) -> Result<Reply> {
        self.accept(msg)?;
        let compensated = self.compensate(msg)?;
        self.per_worker_step(msg.worker_id, &compensated)?;
        Ok(self.finish(msg.worker_id, ReplyKind::LookAhead))
    }

    /// `v^0 <- v^0 - v_old + v_new` in `O(k)` regardless of the worker count.
    pub fn update_aggregate(
        &mut self,
        worker_id: usize,
        v_old: &ParamVector,
        v_new: &ParamVector,
    ) -> Result<()> {
        self.check_worker(worker_id)?;
        v_old.check_dim(v_new)?;
        self.aggregate_momentum.check_dim(v_old)?;
        for ((agg, old), new) in self
            .aggregate_momentum
            .as_mut_slice()
            .iter_mut()
            .zip(v_old.iter())
            .zip(v_new.iter())
        {
            *agg += new - old;
        }
        Ok(())
    }

    /// Change the learning rate. With `correct_momentum` every momentum buffer
    /// is rescaled so `eta * v` is continuous across the change.
    pub fn set_eta(&mut self, eta: f64, correct_momentum: bool) -> Result<()> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(invalid("eta", format!("must be positive, got {eta}")));
        }
        let old = self.hyper.eta;
        if correct_momentum && old > 0.0 && old != eta {
            let ratio = old / eta;
            self.shared_momentum.scale(ratio);
            self.aggregate_momentum.scale(ratio);
            for v in &mut self.per_worker_momentum {
                v.scale(ratio);
            }
        }
        self.hyper.eta = eta;
        Ok(())
    }

    fn check_worker(&self, worker_id: usize) -> Result<()> {
        if worker_id >= self.num_workers() {
            return Err(Error::UnknownWorker(worker_id));
        }
        Ok(())
    }

    fn accept(&mut self, msg: &UpdateMessage) -> Result<()> {
        self.check_worker(msg.worker_id)?;
        self.theta.check_dim(&msg.payload)?;
        let lag = staleness::lag(msg.dispatched_at, self.update_count)?;
        let lags = &mut self.recent_lags[msg.worker_id];
        if lags.len() == LWP_LAG_WINDOW {
            lags.pop_front();
        }
        lags.push_back(lag);
        Ok(())
    }

    fn per_worker_step(&mut self, worker_id: usize, g: &ParamVector) -> Result<()> {
        let v_old = self.per_worker_momentum[worker_id].clone();
        self.per_worker_momentum[worker_id].scale_add(self.hyper.gamma, g)?;
        let v_new = std::mem::replace(
            &mut self.per_worker_momentum[worker_id],
            ParamVector::zeros(0),
        );
        self.update_aggregate(worker_id, &v_old, &v_new)?;
        self.theta.axpy(-self.hyper.eta, &v_new)?;
        self.per_worker_momentum[worker_id] = v_new;
        Ok(())
    }

    fn compensate(&self, msg: &UpdateMessage) -> Result<ParamVector> {
        let sent = &self.last_sent[msg.worker_id];
        let lambda = self.hyper.lambda;
        Ok(ParamVector::from(
            msg.payload
                .iter()
                .zip(self.theta.iter())
                .zip(sent.iter())
                .map(|((g, master), worker)| g + lambda * g * g * (master - worker))
                .collect::<Vec<_>>(),
        ))
    }

    fn finish(&mut self, worker_id: usize, kind: ReplyKind) -> Reply {
        self.update_count += 1;
        self.reply_with(worker_id, kind)
    }

    fn reply(&mut self, worker_id: usize) -> Reply {
        self.reply_with(worker_id, ReplyKind::for_rule(self.rule))
    }

    fn reply_with(&mut self, worker_id: usize, kind: ReplyKind) -> Reply {
        let eta = self.hyper.eta;
        let params = match kind {
            ReplyKind::Current => self.theta.clone(),
            ReplyKind::LinearPrediction => {
                let tau = self.lag_estimate(worker_id).unwrap_or(0.0);
                ParamVector::linear_combine(1.0, &self.theta, -tau * eta, &self.shared_momentum)
                    .expect("momentum matches parameter dimension")
            }
            ReplyKind::LookAhead => ParamVector::linear_combine(
                1.0,
                &self.theta,
                -eta * self.hyper.gamma,
                &self.aggregate_momentum,
            )
            .expect("momentum matches parameter dimension"),
        };
        self.last_sent[worker_id] = params.clone();
        Reply {
            worker_id,
            params,
            dispatched_at: self.update_count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ReplyKind {
    Current,
    LinearPrediction,
    LookAhead,
}

impl ReplyKind {
    fn for_rule(rule: MasterRule) -> Self {
        match rule {
            MasterRule::Asgd | MasterRule::NagAsgd | MasterRule::MultiAsgd | MasterRule::DcAsgd => {
                Self::Current
            }
            MasterRule::Lwp => Self::LinearPrediction,
            MasterRule::DanaZero | MasterRule::DanaDc => Self::LookAhead,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkerState {
    pub worker_id: usize,
    /// DANA-Slim momentum `v^i`; unused by every other worker kind.
    pub local_momentum: ParamVector,
    /// Parameters last received from the master.
    pub held_params: ParamVector,
    pub dispatched_at: u64,
}

impl WorkerState {
    pub fn new(worker_id: usize, dim: usize) -> Self {
        Self {
            worker_id,
            local_momentum: ParamVector::zeros(dim),
            held_params: ParamVector::zeros(dim),
            dispatched_at: 0,
        }
    }

    pub fn receive(&mut self, reply: Reply) {
        debug_assert_eq!(reply.worker_id, self.worker_id);
        self.held_params = reply.params;
        self.dispatched_at = reply.dispatched_at;
    }

    /// ASGD worker: the payload is the raw gradient.
    pub fn asgd_message(&self, grad: ParamVector) -> UpdateMessage {
        UpdateMessage {
            worker_id: self.worker_id,
            payload: grad,
            dispatched_at: self.dispatched_at,
        }
    }

    /// DANA-Slim worker: `v <- gamma * v + g`, payload `gamma * v + g`.
    pub fn dana_slim_message(&mut self, grad: &ParamVector, gamma: f64) -> Result<UpdateMessage> {
        self.local_momentum.scale_add(gamma, grad)?;
        let payload = ParamVector::linear_combine(gamma, &self.local_momentum, 1.0, grad)?;
        Ok(UpdateMessage {
            worker_id: self.worker_id,
            payload,
            dispatched_at: self.dispatched_at,
        })
    }

    pub fn round_asgd(&self, obj: &Objective, batch: &[usize]) -> Result<UpdateMessage> {
        let grad = obj.grad(&self.held_params, batch)?;
        Ok(self.asgd_message(grad))
    }

    pub fn round_dana_slim(
        &mut self,
        obj: &Objective,
        batch: &[usize],
        gamma: f64,
    ) -> Result<UpdateMessage> {
        let grad = obj.grad(&self.held_params, batch)?;
        self.dana_slim_message(&grad, gamma)
    }

    /// Momentum correction for a learning-rate change `eta_old -> eta_new`.
    pub fn correct_momentum(&mut self, eta_old: f64, eta_new: f64) {
        if eta_old > 0.0 && eta_new > 0.0 && eta_old != eta_new {
            self.local_momentum.scale(eta_old / eta_new);
        }
    }
}
