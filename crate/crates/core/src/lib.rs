//! Black-box variational inference with fixed learning-rate epochs,
//! Markov-chain convergence diagnostics, iterate averaging and an
//! accuracy-driven termination rule.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod faso;
pub mod family;
pub mod gradient;
pub mod harness;
pub mod optim;
pub mod rwm;
pub mod target;
pub mod termination;

pub use error::{Error, Result};
pub use family::{FamilyKind, FullRankGaussian, Gaussian, MeanFieldGaussian};
pub use gradient::{estimate_negative_elbo_grad, ElboGradient, GradientEstimate, StochasticGradient};
pub use optim::{step, Optimizer, OptimizerHyper, OptimizerKind};
pub use target::{
    make_gaussian_target, make_logistic_regression_target, optimal_mf_approximation,
    GaussianStructure, GaussianTarget, GaussianTargetSpec, LogisticRegressionTarget, TargetModel,
};
