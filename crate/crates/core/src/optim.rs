//! Fixed learning-rate descent directions.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::FamilyKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Rmsprop,
    Adam,
    AvgRmsprop,
    AvgAdam,
    Ngd,
    WindowedAdagrad,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 7] = [
        OptimizerKind::Sgd,
        OptimizerKind::Rmsprop,
        OptimizerKind::Adam,
        OptimizerKind::AvgRmsprop,
        OptimizerKind::AvgAdam,
        OptimizerKind::Ngd,
        OptimizerKind::WindowedAdagrad,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Rmsprop => "rmsprop",
            OptimizerKind::Adam => "adam",
            OptimizerKind::AvgRmsprop => "avg_rmsprop",
            OptimizerKind::AvgAdam => "avg_adam",
            OptimizerKind::Ngd => "ngd",
            OptimizerKind::WindowedAdagrad => "windowed_adagrad",
        }
    }

    /// Whether the stationary bias of this optimizer scales linearly in the
    /// learning rate when paired with a mean-field family.
    pub fn has_linear_bias(self) -> bool {
        matches!(
            self,
            OptimizerKind::Sgd | OptimizerKind::AvgAdam | OptimizerKind::AvgRmsprop
        )
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OptimizerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown optimizer `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub rms_beta: f64,
    pub eps_num: f64,
    pub adagrad_window: usize,
}

impl Default for OptimizerHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            rms_beta: 0.9,
            eps_num: 1e-8,
            adagrad_window: 10,
        }
    }
}

impl OptimizerHyper {
    pub fn validate(&self) -> Result<()> {
        for (name, b) in [
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("rms_beta", self.rms_beta),
        ] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1)")));
            }
        }
        if !(self.eps_num >= 0.0 && self.eps_num.is_finite()) {
            return Err(Error::InvalidArgument("eps_num must be finite and >= 0".into()));
        }
        if self.adagrad_window == 0 {
            return Err(Error::InvalidArgument("adagrad_window must be positive".into()));
        }
        Ok(())
    }
}

/// Optimizer state for one chain of iterates.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    hyper: OptimizerHyper,
    step_count: u64,
    grad_ema: Vec<f64>,
    sq_grad: Vec<f64>,
    window_buffer: VecDeque<Vec<f64>>,
}

impl Optimizer {
    /// `family` is only consulted by NGD, which requires a mean-field family.
    pub fn new(
        kind: OptimizerKind,
        hyper: OptimizerHyper,
        family: FamilyKind,
        num_params: usize,
    ) -> Result<Self> {
        hyper.validate()?;
        if kind == OptimizerKind::Ngd && family != FamilyKind::MeanField {
            return Err(Error::InvalidArgument(
                "ngd is only available for the mean-field family".into(),
            ));
        }
        if kind == OptimizerKind::Ngd && num_params % 2 != 0 {
            return Err(Error::InvalidArgument(
                "ngd needs an even-length (tau, psi) parameter vector".into(),
            ));
        }
        Ok(Self {
            kind,
            hyper,
            step_count: 0,
            grad_ema: vec![0.0; num_params],
            sq_grad: vec![0.0; num_params],
            window_buffer: VecDeque::new(),
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn hyper(&self) -> &OptimizerHyper {
        &self.hyper
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn grad_ema(&self) -> &[f64] {
        &self.grad_ema
    }

    pub fn sq_grad(&self) -> &[f64] {
        &self.sq_grad
    }

    pub fn num_params(&self) -> usize {
        self.sq_grad.len()
    }

    /// Forget all accumulated moments.
    pub fn reset(&mut self) {
        self.step_count = 0;
        self.grad_ema.iter_mut().for_each(|v| *v = 0.0);
        self.sq_grad.iter_mut().for_each(|v| *v = 0.0);
        self.window_buffer.clear();
    }

    /// Consume one gradient and return the descent direction `d_k`.
    pub fn descent_direction(&mut self, grad: &[f64], params: &[f64]) -> Result<Vec<f64>> {
        let m = self.num_params();
        if grad.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: grad.len(),
            });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient {
                step: self.step_count,
            });
        }
        if self.kind == OptimizerKind::Ngd && params.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: params.len(),
            });
        }
        self.step_count += 1;
        let k = self.step_count as f64;
        let h = self.hyper;
        let dir = match self.kind {
            OptimizerKind::Sgd => grad.to_vec(),
            OptimizerKind::Rmsprop => {
                for (v, g) in self.sq_grad.iter_mut().zip(grad) {
                    *v = h.rms_beta * *v + (1.0 - h.rms_beta) * g * g;
                }
                scale_by_root(grad, &self.sq_grad, 1.0, h.eps_num)
            }
            OptimizerKind::Adam => {
                self.update_first_moment(grad);
                for (v, g) in self.sq_grad.iter_mut().zip(grad) {
                    *v = h.beta2 * *v + (1.0 - h.beta2) * g * g;
                }
                let c1 = 1.0 - h.beta1.powf(k);
                let c2 = 1.0 - h.beta2.powf(k);
                self.grad_ema
                    .iter()
                    .zip(&self.sq_grad)
                    .map(|(mo, v)| (mo / c1) / ((v / c2).sqrt() + h.eps_num))
                    .collect()
            }
            OptimizerKind::AvgRmsprop => {
                self.update_running_mean(grad);
                scale_by_root(grad, &self.sq_grad, 1.0, h.eps_num)
            }
            OptimizerKind::AvgAdam => {
                self.update_first_moment(grad);
                self.update_running_mean(grad);
                let c1 = 1.0 - h.beta1.powf(k);
                scale_by_root(&self.grad_ema, &self.sq_grad, c1, h.eps_num)
            }
            OptimizerKind::WindowedAdagrad => {
                if self.window_buffer.len() == h.adagrad_window {
                    self.window_buffer.pop_front();
                }
                self.window_buffer
                    .push_back(grad.iter().map(|g| g * g).collect());
                let n = self.window_buffer.len() as f64;
                for (i, v) in self.sq_grad.iter_mut().enumerate() {
                    *v = self.window_buffer.iter().map(|row| row[i]).sum::<f64>() / n;
                }
                scale_by_root(grad, &self.sq_grad, 1.0, h.eps_num)
            }
            OptimizerKind::Ngd => {
                // Inverse Fisher of N(tau, diag e^{2 psi}) in (tau, psi) coordinates
                // is diag(sigma^2, 1/2).
                let d = m / 2;
                let mut out = vec![0.0; m];
                for i in 0..d {
                    out[i] = (2.0 * params[d + i]).exp() * grad[i];
                    out[d + i] = 0.5 * grad[d + i];
                }
                out
            }
        };
        Ok(dir)
    }

    fn update_first_moment(&mut self, grad: &[f64]) {
        let b = self.hyper.beta1;
        for (mo, g) in self.grad_ema.iter_mut().zip(grad) {
            *mo = b * *mo + (1.0 - b) * g;
        }
    }

    fn update_running_mean(&mut self, grad: &[f64]) {
        // Incremental form keeps a constant sequence exact.
        let k = self.step_count as f64;
        for (v, g) in self.sq_grad.iter_mut().zip(grad) {
            *v += (g * g - *v) / k;
        }
    }
}

fn scale_by_root(num: &[f64], v: &[f64], num_div: f64, eps: f64) -> Vec<f64> {
    num.iter()
        .zip(v)
        .map(|(n, v)| (n / num_div) / (v.sqrt() + eps))
        .collect()
}

/// `lambda <- lambda - gamma * d`.
pub fn step(params: &mut [f64], direction: &[f64], gamma: f64) -> Result<()> {
    if params.len() != direction.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            actual: direction.len(),
        });
    }
    for (p, d) in params.iter_mut().zip(direction) {
        *p -= gamma * d;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn opt(kind: OptimizerKind, m: usize) -> Optimizer {
        Optimizer::new(kind, OptimizerHyper::default(), FamilyKind::MeanField, m).unwrap()
    }

    #[test]
    fn sgd_direction_is_grad() {
        let mut o = opt(OptimizerKind::Sgd, 3);
        let g = [0.1, -2.5, 1e-300];
        assert_eq!(o.descent_direction(&g, &[0.0; 3]).unwrap(), g.to_vec());
        assert_eq!(o.step_count(), 1);
    }

    #[test]
    fn step_examples() {
        let mut p = vec![0.0, 0.0];
        step(&mut p, &[1.0, -1.0], 0.1).unwrap();
        assert_eq!(p, vec![-0.1, 0.1]);
        let before = p.clone();
        step(&mut p, &[3.0, 4.0], 0.0).unwrap();
        assert_eq!(p, before);
        assert!(step(&mut p, &[1.0], 0.1).is_err());
    }

    #[test]
    fn sgd_on_quadratic_decays_geometrically() {
        let mut o = opt(OptimizerKind::Sgd, 1);
        let mut lam = vec![1.0];
        for _ in 0..100 {
            let g = lam.clone();
            let d = o.descent_direction(&g, &lam).unwrap();
            step(&mut lam, &d, 0.1).unwrap();
        }
        assert_relative_eq!(lam[0], 0.9f64.powi(100), max_relative = 1e-12);
    }

    #[test]
    fn avg_adam_constant_gradient_keeps_exact_square() {
        let mut o = opt(OptimizerKind::AvgAdam, 2);
        let g = [0.3, -7.0];
        for _ in 0..500 {
            o.descent_direction(&g, &[0.0; 2]).unwrap();
            assert_eq!(o.sq_grad(), &[0.09, 49.0]);
        }
    }

    #[test]
    fn rmsprop_first_step_matches_hand_computation() {
        let mut o = opt(OptimizerKind::Rmsprop, 1);
        let d = o.descent_direction(&[2.0], &[0.0]).unwrap();
        let v: f64 = 0.1 * 4.0;
        assert_relative_eq!(d[0], 2.0 / (v.sqrt() + 1e-8), max_relative = 1e-15);
    }

    #[test]
    fn adam_first_step_is_unit_sign() {
        let mut o = opt(OptimizerKind::Adam, 2);
        let d = o.descent_direction(&[3.0, -0.5], &[0.0; 2]).unwrap();
        assert_relative_eq!(d[0], 1.0, max_relative = 1e-8);
        assert_relative_eq!(d[1], -1.0, max_relative = 1e-7);
    }

    #[test]
    fn windowed_adagrad_uses_trailing_window() {
        let hyper = OptimizerHyper {
            adagrad_window: 2,
            ..OptimizerHyper::default()
        };
        let mut o = Optimizer::new(OptimizerKind::WindowedAdagrad, hyper, FamilyKind::MeanField, 1)
            .unwrap();
        for g in [1.0, 2.0, 3.0] {
            o.descent_direction(&[g], &[0.0]).unwrap();
        }
        assert_relative_eq!(o.sq_grad()[0], (4.0 + 9.0) / 2.0);
    }

    #[test]
    fn ngd_scales_mean_by_variance() {
        let mut o = opt(OptimizerKind::Ngd, 2);
        let psi = 2f64.ln();
        let d = o.descent_direction(&[1.0, 1.0], &[0.0, psi]).unwrap();
        assert_relative_eq!(d[0], 4.0, max_relative = 1e-14);
        assert_relative_eq!(d[1], 0.5);
        assert!(
            Optimizer::new(OptimizerKind::Ngd, OptimizerHyper::default(), FamilyKind::FullRank, 5)
                .is_err()
        );
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut o = opt(OptimizerKind::Adam, 2);
        o.descent_direction(&[1.0, 1.0], &[0.0; 2]).unwrap();
        let err = o.descent_direction(&[f64::NAN, 1.0], &[0.0; 2]).unwrap_err();
        assert_eq!(err, Error::NonFiniteGradient { step: 1 });
        assert_eq!(o.step_count(), 1);
    }

    #[test]
    fn kind_round_trips_through_name() {
        for k in OptimizerKind::ALL {
            assert_eq!(k.name().parse::<OptimizerKind>().unwrap(), k);
        }
        assert!("adamw".parse::<OptimizerKind>().is_err());
    }

    #[test]
    fn reset_clears_state() {
        let mut o = opt(OptimizerKind::AvgAdam, 1);
        o.descent_direction(&[5.0], &[0.0]).unwrap();
        o.reset();
        assert_eq!(o.step_count(), 0);
        o.descent_direction(&[1.0], &[0.0]).unwrap();
        assert_eq!(o.sq_grad(), &[1.0]);
    }
}
