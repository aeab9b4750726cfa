//! Target distributions: unnormalized log densities with analytic gradients.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::family::{FullRankGaussian, MeanFieldGaussian};

/// An unnormalized posterior `log pi^u` on `R^d` with its gradient.
pub trait TargetModel: Send + Sync {
    fn dim(&self) -> usize;

    fn log_density_u(&self, theta: &[f64]) -> f64;

    /// Writes `grad log pi^u(theta)` into `grad` and returns `log pi^u(theta)`.
    fn log_density_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64;

    fn grad_log_density_u(&self, theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.log_density_and_grad(theta, &mut g);
        g
    }

    /// Rough number of floating point multiply-adds per gradient evaluation.
    fn cost_hint(&self) -> f64 {
        self.dim() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaussianStructure {
    /// `V = I`
    Identity,
    /// `V_ii = i` (1-based)
    DiagNonidentity,
    /// unit variances, all off-diagonal entries `corr`
    UniformCorr,
    /// `V_ij = corr^|i-j|`
    BandedCorr,
}

impl GaussianStructure {
    pub fn name(self) -> &'static str {
        match self {
            GaussianStructure::Identity => "identity",
            GaussianStructure::DiagNonidentity => "diag_nonidentity",
            GaussianStructure::UniformCorr => "uniform_corr",
            GaussianStructure::BandedCorr => "banded_corr",
        }
    }

    pub fn is_diagonal(self) -> bool {
        matches!(
            self,
            GaussianStructure::Identity | GaussianStructure::DiagNonidentity
        )
    }
}

impl std::str::FromStr for GaussianStructure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "identity" => GaussianStructure::Identity,
            "diag_nonidentity" => GaussianStructure::DiagNonidentity,
            "uniform_corr" => GaussianStructure::UniformCorr,
            "banded_corr" => GaussianStructure::BandedCorr,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown gaussian structure `{other}`"
                )))
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianTargetSpec {
    pub d: usize,
    pub structure: GaussianStructure,
    pub corr: f64,
}

impl GaussianTargetSpec {
    pub fn new(d: usize, structure: GaussianStructure) -> Self {
        Self {
            d,
            structure,
            corr: 0.8,
        }
    }

    pub fn with_corr(mut self, corr: f64) -> Self {
        self.corr = corr;
        self
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.d;
        let rho = self.corr;
        DMatrix::from_fn(d, d, |i, j| match self.structure {
            GaussianStructure::Identity => f64::from(u8::from(i == j)),
            GaussianStructure::DiagNonidentity => {
                if i == j {
                    (i + 1) as f64
                } else {
                    0.0
                }
            }
            GaussianStructure::UniformCorr => {
                if i == j {
                    1.0
                } else {
                    rho
                }
            }
            GaussianStructure::BandedCorr => rho.powi(i.abs_diff(j) as i32),
        })
    }

    fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidArgument("target dimension must be positive".into()));
        }
        if !self.structure.is_diagonal() && !(self.corr > 0.0 && self.corr < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "correlation must lie in (0, 1), got {}",
                self.corr
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Precision {
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

/// `N(0, V)` with `log pi^u(theta) = -theta^T V^{-1} theta / 2`.
#[derive(Clone, Debug)]
pub struct GaussianTarget {
    spec: GaussianTargetSpec,
    covariance: DMatrix<f64>,
    precision: Precision,
}

pub fn make_gaussian_target(spec: GaussianTargetSpec) -> Result<GaussianTarget> {
    spec.validate()?;
    let covariance = spec.covariance();
    let precision = if spec.structure.is_diagonal() {
        Precision::Diagonal(covariance.diagonal().iter().map(|v| 1.0 / v).collect())
    } else {
        let chol = covariance
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite)?;
        Precision::Dense(chol.inverse())
    };
    Ok(GaussianTarget {
        spec,
        covariance,
        precision,
    })
}

impl GaussianTarget {
    pub fn spec(&self) -> &GaussianTargetSpec {
        &self.spec
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn precision_diagonal(&self) -> Vec<f64> {
        match &self.precision {
            Precision::Diagonal(p) => p.clone(),
            Precision::Dense(p) => p.diagonal().iter().copied().collect(),
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        vec![0.0; self.spec.d]
    }

    pub fn sd(&self) -> Vec<f64> {
        self.covariance.diagonal().iter().map(|v| v.sqrt()).collect()
    }

    /// The target itself as a full-rank Gaussian; the exact optimum of
    /// `KL(q || pi)` over the full-rank family.
    pub fn as_full_rank(&self) -> Result<FullRankGaussian> {
        FullRankGaussian::from_covariance(self.mean(), &self.covariance)
    }

    pub fn optimal_mf_approximation(&self) -> MeanFieldGaussian {
        let psi = self
            .precision_diagonal()
            .iter()
            .map(|p| -0.5 * p.ln())
            .collect();
        MeanFieldGaussian {
            tau: self.mean(),
            psi,
        }
    }
}

/// Minimizer of `KL(q || N(0, V))` over the mean-field family: zero mean and
/// variances matched to the precision diagonal, `sigma_i^2 = 1 / (V^{-1})_ii`.
pub fn optimal_mf_approximation(spec: GaussianTargetSpec) -> Result<MeanFieldGaussian> {
    Ok(make_gaussian_target(spec)?.optimal_mf_approximation())
}

impl TargetModel for GaussianTarget {
    fn dim(&self) -> usize {
        self.spec.d
    }

    fn log_density_u(&self, theta: &[f64]) -> f64 {
        let mut g = vec![0.0; self.spec.d];
        self.log_density_and_grad(theta, &mut g)
    }

    fn log_density_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        match &self.precision {
            Precision::Diagonal(p) => {
                let mut lp = 0.0;
                for i in 0..theta.len() {
                    grad[i] = -p[i] * theta[i];
                    lp += theta[i] * grad[i];
                }
                0.5 * lp
            }
            Precision::Dense(p) => {
                let d = theta.len();
                let mut lp = 0.0;
                for i in 0..d {
                    let row = p.row(i);
                    let mut acc = 0.0;
                    for j in 0..d {
                        acc += row[j] * theta[j];
                    }
                    grad[i] = -acc;
                    lp -= theta[i] * acc;
                }
                0.5 * lp
            }
        }
    }

    fn cost_hint(&self) -> f64 {
        match self.precision {
            Precision::Diagonal(_) => self.spec.d as f64,
            Precision::Dense(_) => (self.spec.d * self.spec.d) as f64,
        }
    }
}

/// Bayesian logistic regression with an isotropic Gaussian prior of scale `s`:
/// `sum_i [y_i x_i.beta - ln(1 + e^{x_i.beta})] - |beta|^2 / (2 s^2)`.
#[derive(Clone, Debug)]
pub struct LogisticRegressionTarget {
    x: DMatrix<f64>,
    y: DVector<f64>,
    prior_scale: f64,
}

pub fn make_logistic_regression_target(
    x: DMatrix<f64>,
    y: Vec<f64>,
    prior_scale: f64,
) -> Result<LogisticRegressionTarget> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    if x.ncols() == 0 {
        return Err(Error::InvalidArgument("need at least one covariate".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("covariates contain NaN or infinity".into()));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument("responses must be 0 or 1".into()));
    }
    if !(prior_scale > 0.0 && prior_scale.is_finite()) {
        return Err(Error::InvalidArgument("prior_scale must be positive".into()));
    }
    Ok(LogisticRegressionTarget {
        x,
        y: DVector::from_vec(y),
        prior_scale,
    })
}

impl LogisticRegressionTarget {
    /// Reads a CSV with a header row; the last column is the 0/1 response.
    pub fn from_csv(path: &Path, prior_scale: f64) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::Io(e.to_string()))?;
            let row = record
                .iter()
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|_| {
                        Error::InvalidArgument(format!("non-numeric CSV field `{f}`"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let width = rows.first().map_or(0, Vec::len);
        if width < 2 || rows.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidArgument(
                "CSV needs a consistent number of columns (>= 2)".into(),
            ));
        }
        let p = width - 1;
        let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        let y = rows.iter().map(|r| r[p]).collect();
        make_logistic_regression_target(x, y, prior_scale)
    }
}

fn softplus(a: f64) -> f64 {
    a.max(0.0) + (-a.abs()).exp().ln_1p()
}

fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

impl TargetModel for LogisticRegressionTarget {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn log_density_u(&self, theta: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim()];
        self.log_density_and_grad(theta, &mut g)
    }

    fn log_density_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let p = self.dim();
        let inv_s2 = 1.0 / (self.prior_scale * self.prior_scale);
        let mut lp = 0.0;
        for j in 0..p {
            grad[j] = -theta[j] * inv_s2;
            lp -= 0.5 * theta[j] * theta[j] * inv_s2;
        }
        for i in 0..self.x.nrows() {
            let row = self.x.row(i);
            let a: f64 = (0..p).map(|j| row[j] * theta[j]).sum();
            lp += self.y[i] * a - softplus(a);
            let resid = self.y[i] - sigmoid(a);
            for j in 0..p {
                grad[j] += resid * row[j];
            }
        }
        lp
    }

    fn cost_hint(&self) -> f64 {
        ((self.x.nrows() + 1) * self.dim()) as f64
    }
}
