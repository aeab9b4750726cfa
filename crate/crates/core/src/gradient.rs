//! Reparameterization estimator of the negative-ELBO gradient.
//!
//! With `theta = T_lambda(z)`, `z ~ N(0, I)`, the estimator is
//! `-(1/M) sum_s J_lambda(z_s)^T grad log pi^u(theta_s) - grad entropy(q_lambda)`,
//! where the entropy term is analytic.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::family::{FamilyKind, FullRankGaussian, Gaussian, MeanFieldGaussian};
use crate::target::TargetModel;

#[derive(Clone, Debug, PartialEq)]
pub struct GradientEstimate {
    /// Estimate of `grad_lambda [-ELBO(q_lambda)]`, in flat parameter layout.
    pub grad: Vec<f64>,
    /// Mean of `log pi^u` over the sampled `theta`s.
    pub per_sample_logp_mean: f64,
}

/// A source of stochastic gradients for a flat parameter vector.
pub trait StochasticGradient {
    fn num_params(&self) -> usize;

    fn estimate<R: Rng + ?Sized>(&mut self, params: &[f64], rng: &mut R)
        -> Result<GradientEstimate>;

    /// Approximate multiply-adds per call, used to price optimization against
    /// diagnostics when no wall clock is used.
    fn cost_hint(&self) -> f64 {
        self.num_params() as f64
    }
}

fn check_finite(theta: &[f64], lp: f64, grad: &[f64]) -> Result<()> {
    if !lp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteTarget {
            theta: theta.to_vec(),
        });
    }
    Ok(())
}

fn mean_field_grad<R: Rng + ?Sized>(
    p: &MeanFieldGaussian,
    target: &dyn TargetModel,
    num_samples: usize,
    rng: &mut R,
) -> Result<GradientEstimate> {
    let d = p.dim();
    let sd = p.sd();
    let mut grad = vec![0.0; 2 * d];
    let mut z = vec![0.0; d];
    let mut theta = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut lp_sum = 0.0;
    for _ in 0..num_samples {
        for i in 0..d {
            z[i] = rng.sample(StandardNormal);
            theta[i] = p.tau[i] + sd[i] * z[i];
        }
        let lp = target.log_density_and_grad(&theta, &mut g);
        check_finite(&theta, lp, &g)?;
        lp_sum += lp;
        for i in 0..d {
            grad[i] -= g[i];
            grad[d + i] -= g[i] * sd[i] * z[i];
        }
    }
    let inv_m = 1.0 / num_samples as f64;
    for v in grad.iter_mut() {
        *v *= inv_m;
    }
    // d entropy / d psi_i = 1
    for v in grad[d..].iter_mut() {
        *v -= 1.0;
    }
    Ok(GradientEstimate {
        grad,
        per_sample_logp_mean: lp_sum * inv_m,
    })
}

fn full_rank_grad<R: Rng + ?Sized>(
    p: &FullRankGaussian,
    target: &dyn TargetModel,
    num_samples: usize,
    rng: &mut R,
) -> Result<GradientEstimate> {
    let d = p.dim();
    let n_off = d * (d - 1) / 2;
    let m = d + n_off + d;
    let mut grad = vec![0.0; m];
    let mut z = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut lp_sum = 0.0;
    let wrapped = Gaussian::FullRank(p.clone());
    for _ in 0..num_samples {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let theta = wrapped.sample(&z)?;
        let lp = target.log_density_and_grad(&theta, &mut g);
        check_finite(&theta, lp, &g)?;
        lp_sum += lp;
        for i in 0..d {
            grad[i] -= g[i];
        }
        let mut idx = d;
        for i in 0..d {
            for j in 0..i {
                grad[idx] -= g[i] * z[j];
                idx += 1;
            }
        }
        for i in 0..d {
            grad[d + n_off + i] -= g[i] * z[i] * p.scale_tril[(i, i)];
        }
    }
    let inv_m = 1.0 / num_samples as f64;
    for v in grad.iter_mut() {
        *v *= inv_m;
    }
    for v in grad[d + n_off..].iter_mut() {
        *v -= 1.0;
    }
    Ok(GradientEstimate {
        grad,
        per_sample_logp_mean: lp_sum * inv_m,
    })
}

/// Unbiased estimate of the negative-ELBO gradient using `num_samples` draws.
pub fn estimate_negative_elbo_grad<R: Rng + ?Sized>(
    params: &Gaussian,
    target: &dyn TargetModel,
    num_samples: usize,
    rng: &mut R,
) -> Result<GradientEstimate> {
    if num_samples == 0 {
        return Err(Error::InvalidArgument("need at least one Monte Carlo sample".into()));
    }
    if params.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            actual: params.dim(),
        });
    }
    match params {
        Gaussian::MeanField(p) => mean_field_grad(p, target, num_samples, rng),
        Gaussian::FullRank(p) => full_rank_grad(p, target, num_samples, rng),
    }
}

/// [`StochasticGradient`] adapter over a target and a variational family.
pub struct ElboGradient<'a> {
    target: &'a dyn TargetModel,
    family: FamilyKind,
    num_samples: usize,
}

impl<'a> ElboGradient<'a> {
    pub fn new(target: &'a dyn TargetModel, family: FamilyKind, num_samples: usize) -> Result<Self> {
        if num_samples == 0 {
            return Err(Error::InvalidArgument("need at least one Monte Carlo sample".into()));
        }
        Ok(Self {
            target,
            family,
            num_samples,
        })
    }

    pub fn family(&self) -> FamilyKind {
        self.family
    }

    pub fn target(&self) -> &'a dyn TargetModel {
        self.target
    }
}

impl StochasticGradient for ElboGradient<'_> {
    fn num_params(&self) -> usize {
        self.family.num_params(self.target.dim())
    }

    fn estimate<R: Rng + ?Sized>(&mut self, params: &[f64], rng: &mut R) -> Result<GradientEstimate> {
        let q = Gaussian::from_flat(self.family, params)?;
        estimate_negative_elbo_grad(&q, self.target, self.num_samples, rng)
    }

    fn cost_hint(&self) -> f64 {
        let d = self.target.dim() as f64;
        let transform = match self.family {
            FamilyKind::MeanField => 4.0 * d,
            FamilyKind::FullRank => 2.0 * d * d,
        };
        self.num_samples as f64 * (self.target.cost_hint() + transform)
    }
}
