//! Single-worker update rules: SGD, heavy-ball momentum, NAG and Bengio-NAG.
//!
//! Momentum is undampened and starts at zero. These are the sequential
//! baselines and the reference trajectories the distributed variants are
//! checked against.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::vector::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    /// Learning rate.
    pub eta: f64,
    /// Momentum coefficient in `[0, 1)`.
    pub gamma: f64,
}

impl Hyper {
    pub fn new(eta: f64, gamma: f64) -> Result<Self> {
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(invalid(
                "eta",
                format!("must be finite and non-negative, got {eta}"),
            ));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(invalid("gamma", format!("must lie in [0, 1), got {gamma}")));
        }
        Ok(Self { eta, gamma })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    /// `theta` for SGD/momentum/NAG, `Theta` for Bengio-NAG.
    pub params: ParamVector,
    pub momentum: ParamVector,
    pub hyper: Hyper,
}

/// What a NAG step evaluated the gradient on, for checking the look-ahead
/// identity `theta' - theta_hat = -eta * g`.
#[derive(Debug, Clone, PartialEq)]
pub struct LookAhead {
    pub point: ParamVector,
    pub grad: ParamVector,
}

impl OptState {
    pub fn new(params: ParamVector, hyper: Hyper) -> Self {
        let momentum = ParamVector::zeros(params.dim());
        Self {
            params,
            momentum,
            hyper,
        }
    }

    /// `theta <- theta - eta * g`.
    pub fn sgd_step(&mut self, g: &ParamVector) -> Result<()> {
        self.params.axpy(-self.hyper.eta, g)
    }

    /// `v <- gamma * v + g; theta <- theta - eta * v`.
    pub fn momentum_step(&mut self, g: &ParamVector) -> Result<()> {
        self.momentum.scale_add(self.hyper.gamma, g)?;
        self.params.axpy(-self.hyper.eta, &self.momentum)
    }

    /// Nesterov step: the gradient is taken at `theta - eta * gamma * v` and
    /// applied to `theta` through the momentum.
    pub fn nag_step<F>(&mut self, mut gradient: F) -> Result<LookAhead>
    where
        F: FnMut(&ParamVector) -> Result<ParamVector>,
    {
        let Hyper { eta, gamma } = self.hyper;
        let point = ParamVector::linear_combine(1.0, &self.params, -eta * gamma, &self.momentum)?;
        let grad = gradient(&point)?;
        self.momentum_step(&grad)?;
        Ok(LookAhead { point, grad })
    }

    /// Bengio-NAG over `Theta = theta - eta * gamma * v_prev`: the gradient is
    /// computed on and applied to the same vector,
    /// `Theta <- Theta - eta * (gamma * v' + g)`.
    pub fn bengio_nag_step<F>(&mut self, mut gradient: F) -> Result<ParamVector>
    where
        F: FnMut(&ParamVector) -> Result<ParamVector>,
    {
        let Hyper { eta, gamma } = self.hyper;
        let g = gradient(&self.params)?;
        self.momentum.scale_add(gamma, &g)?;
        let update = ParamVector::linear_combine(gamma, &self.momentum, 1.0, &g)?;
        self.params.axpy(-eta, &update)?;
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::Objective;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::from(v)
    }

    fn state(theta: &[f64], v: &[f64], eta: f64, gamma: f64) -> OptState {
        OptState {
            params: pv(theta),
            momentum: pv(v),
            hyper: Hyper::new(eta, gamma).unwrap(),
        }
    }

    fn close(a: &ParamVector, b: &[f64], tol: f64) -> bool {
        a.max_abs_diff(&pv(b)).unwrap() <= tol
    }

    #[test]
    fn hyper_validation() {
        assert!(Hyper::new(0.1, 1.0).is_err());
        assert!(Hyper::new(-0.1, 0.5).is_err());
        assert!(Hyper::new(0.1, 0.9).is_ok());
    }

    #[test]
    fn sgd_examples() {
        let mut s = state(&[1.0], &[0.0], 0.1, 0.9);
        s.sgd_step(&pv(&[0.5])).unwrap();
        assert!(close(&s.params, &[0.95], 1e-15));
        assert_eq!(s.momentum, pv(&[0.0]));

        let mut s = state(&[1.0, -2.0], &[0.0, 0.0], 0.1, 0.0);
        s.sgd_step(&pv(&[0.0, 0.0])).unwrap();
        assert_eq!(s.params, pv(&[1.0, -2.0]));

        let mut s = state(&[1.0], &[0.0], 0.0, 0.0);
        s.sgd_step(&pv(&[3.0])).unwrap();
        assert_eq!(s.params, pv(&[1.0]));

        assert!(s.sgd_step(&pv(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn momentum_examples() {
        let mut s = state(&[0.0], &[1.0], 0.1, 0.9);
        s.momentum_step(&pv(&[0.5])).unwrap();
        assert!(close(&s.momentum, &[1.4], 1e-15));
        assert!(close(&s.params, &[-0.14], 1e-15));

        let mut m = state(&[2.0, 1.0], &[0.0, 0.0], 0.3, 0.0);
        let mut g = m.clone();
        for step in 0..5 {
            let grad = pv(&[step as f64, -1.0]);
            m.momentum_step(&grad).unwrap();
            g.sgd_step(&grad).unwrap();
        }
        assert_eq!(m.params, g.params);

        let mut s = state(&[0.0], &[2.0], 0.1, 0.9);
        for _ in 0..10 {
            s.momentum_step(&pv(&[0.0])).unwrap();
        }
        assert!((s.momentum[0] - 2.0 * 0.9f64.powi(10)).abs() < 1e-15);
    }

    #[test]
    fn nag_examples() {
        let obj = Objective::bowl(1);
        let grad = |p: &ParamVector| obj.grad(p, &[0]);

        let mut s = state(&[1.0], &[1.0], 0.1, 0.9);
        let la = s.nag_step(grad).unwrap();
        assert!(close(&la.point, &[0.91], 1e-15));
        assert!(close(&la.grad, &[0.91], 1e-15));
        assert!(close(&s.momentum, &[1.81], 1e-15));
        assert!(close(&s.params, &[0.819], 1e-15));

        let mut n = state(&[0.7], &[0.0], 0.1, 0.9);
        let mut m = n.clone();
        let la = n.nag_step(grad).unwrap();
        assert_eq!(la.point, pv(&[0.7]));
        m.momentum_step(&obj.grad(&pv(&[0.7]), &[0]).unwrap())
            .unwrap();
        assert_eq!(n, m);
    }

    #[test]
    fn nag_look_ahead_identity() {
        let obj = Objective::diagonal_quadratic(vec![1.0, 3.0, 0.5]).unwrap();
        let mut s = state(&[1.0, -2.0, 4.0], &[0.0; 3], 0.05, 0.9);
        for _ in 0..200 {
            let la = s.nag_step(|p| obj.grad(p, &[0])).unwrap();
            let lhs = s.params.sub(&la.point).unwrap();
            let rhs = la.grad.scaled(-s.hyper.eta);
            assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-15 * (1.0 + la.point.max_abs()));
        }
    }

    #[test]
    fn bengio_examples() {
        let obj = Objective::bowl(1);
        let mut s = state(&[0.0], &[1.0], 0.1, 0.9);
        s.bengio_nag_step(|p| obj.grad(p, &[0])).unwrap();
        assert!(close(&s.momentum, &[0.9], 1e-15));
        assert!(close(&s.params, &[-0.081], 1e-15));

        let mut b = state(&[2.0], &[0.0], 0.2, 0.0);
        let mut g = b.clone();
        for _ in 0..5 {
            b.bengio_nag_step(|p| obj.grad(p, &[0])).unwrap();
            let grad = obj.grad(&g.params, &[0]).unwrap();
            g.sgd_step(&grad).unwrap();
        }
        assert_eq!(b.params, g.params);
    }

    #[test]
    fn bengio_tracks_nag_change_of_variables() {
        let obj = Objective::diagonal_quadratic(vec![1.0, 0.25]).unwrap();
        let hyper = Hyper::new(0.1, 0.9).unwrap();
        let mut nag = OptState::new(pv(&[3.0, -1.0]), hyper);
        let mut bengio = nag.clone();
        for _ in 0..1000 {
            nag.nag_step(|p| obj.grad(p, &[0])).unwrap();
            bengio.bengio_nag_step(|p| obj.grad(p, &[0])).unwrap();
            let shifted =
                ParamVector::linear_combine(1.0, &nag.params, -0.1 * 0.9, &nag.momentum).unwrap();
            assert!(shifted.max_abs_diff(&bengio.params).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn momentum_beats_sgd_on_ill_conditioned_bowl() {
        let obj = Objective::diagonal_quadratic(vec![1.0, 0.01]).unwrap();
        let steps_to_converge = |gamma: f64| {
            let mut s = OptState::new(pv(&[1.0, 1.0]), Hyper::new(0.5, gamma).unwrap());
            (1..=100_000)
                .find(|_| {
                    let g = obj.grad(&s.params, &[0]).unwrap();
                    s.momentum_step(&g).unwrap();
                    s.params.l2_norm() < 1e-6
                })
                .unwrap_or(usize::MAX)
        };
        let sgd = steps_to_converge(0.0);
        let heavy_ball = steps_to_converge(0.8);
        assert!(heavy_ball < sgd, "momentum {heavy_ball} vs sgd {sgd}");
    }
}
