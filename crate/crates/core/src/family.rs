//! Gaussian variational families.
//!
//! Every family is stored as a flat unconstrained vector so that optimizers
//! only ever see a point in `R^m`:
//!
//! * mean-field: `(tau, psi)` with `psi` the log standard deviations, `m = 2d`;
//! * full-rank: `(mu, strictly-lower L row-major, log diag L)`,
//!   `m = d + d(d+1)/2`, where `L` is the Cholesky factor of the covariance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Entropy of a standard normal in one dimension, `(1 + ln 2pi) / 2`.
pub const STD_NORMAL_ENTROPY: f64 = 1.418_938_533_204_672_7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    MeanField,
    FullRank,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::MeanField => "mean_field",
            FamilyKind::FullRank => "full_rank",
        }
    }

    /// Length of the flat parameter vector for a `d`-dimensional member.
    pub fn num_params(self, d: usize) -> usize {
        match self {
            FamilyKind::MeanField => 2 * d,
            FamilyKind::FullRank => d + d * (d + 1) / 2,
        }
    }

    /// Inverse of [`FamilyKind::num_params`].
    pub fn dim_from_num_params(self, m: usize) -> Option<usize> {
        match self {
            FamilyKind::MeanField => (m % 2 == 0 && m > 0).then_some(m / 2),
            FamilyKind::FullRank => (1..=m).find(|&d| self.num_params(d) == m),
        }
    }
}

impl std::str::FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean_field" => Ok(FamilyKind::MeanField),
            "full_rank" => Ok(FamilyKind::FullRank),
            other => Err(Error::InvalidArgument(format!("unknown family `{other}`"))),
        }
    }
}

/// `N(tau, diag exp(2 psi))`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanFieldGaussian {
    pub tau: Vec<f64>,
    pub psi: Vec<f64>,
}

impl MeanFieldGaussian {
    pub fn new(tau: Vec<f64>, psi: Vec<f64>) -> Result<Self> {
        if tau.is_empty() {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        if tau.len() != psi.len() {
            return Err(Error::DimensionMismatch {
                expected: tau.len(),
                actual: psi.len(),
            });
        }
        if tau.iter().chain(&psi).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("parameters must be finite".into()));
        }
        Ok(Self { tau, psi })
    }

    /// Standard normal in `d` dimensions.
    pub fn standard(d: usize) -> Self {
        Self {
            tau: vec![0.0; d],
            psi: vec![0.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.tau.len()
    }

    pub fn sd(&self) -> Vec<f64> {
        self.psi.iter().map(|p| p.exp()).collect()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.dim());
        out.extend_from_slice(&self.tau);
        out.extend_from_slice(&self.psi);
        out
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.is_empty() || flat.len() % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "mean-field parameter vector must have even positive length, got {}",
                flat.len()
            )));
        }
        let d = flat.len() / 2;
        Self::new(flat[..d].to_vec(), flat[d..].to_vec())
    }

    pub fn to_full_rank(&self) -> FullRankGaussian {
        let d = self.dim();
        let mut l = DMatrix::zeros(d, d);
        for i in 0..d {
            l[(i, i)] = self.psi[i].exp();
        }
        FullRankGaussian {
            mu: self.tau.clone(),
            scale_tril: l,
        }
    }

    fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(())
    }

    /// `KL(self || other)`, summed over independent coordinates.
    pub fn kl_to(&self, other: &Self) -> Result<f64> {
        self.check_same_dim(other)?;
        let mut total = 0.0;
        for i in 0..self.dim() {
            let dt = self.tau[i] - other.tau[i];
            total += other.psi[i] - self.psi[i]
                + 0.5 * ((2.0 * self.psi[i]).exp() + dt * dt) * (-2.0 * other.psi[i]).exp()
                - 0.5;
        }
        Ok(total.max(0.0))
    }

    /// Symmetrized KL via the closed form
    /// `1/2 {e^{2(psi1-psi2)} + e^{2(psi2-psi1)} + (tau1-tau2)^2 (e^{-2psi1} + e^{-2psi2}) - 2}`
    /// per coordinate.
    pub fn skl(&self, other: &Self) -> Result<f64> {
        self.check_same_dim(other)?;
        let mut total = 0.0;
        for i in 0..self.dim() {
            let dpsi = 2.0 * (self.psi[i] - other.psi[i]);
            let dt = self.tau[i] - other.tau[i];
            // e^x + e^-x - 2 = 2(cosh x - 1), written to avoid cancellation near 0.
            let scale_term = 4.0 * (0.5 * dpsi).sinh().powi(2);
            let loc_term =
                dt * dt * ((-2.0 * self.psi[i]).exp() + (-2.0 * other.psi[i]).exp());
            total += 0.5 * (scale_term + loc_term);
        }
        Ok(total)
    }
}

/// `N(mu, L L^T)` with `L` lower triangular and positive diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct FullRankGaussian {
    pub mu: Vec<f64>,
    pub scale_tril: DMatrix<f64>,
}

impl FullRankGaussian {
    pub fn new(mu: Vec<f64>, scale_tril: DMatrix<f64>) -> Result<Self> {
        let d = mu.len();
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        if scale_tril.nrows() != d || scale_tril.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: scale_tril.nrows(),
            });
        }
        for i in 0..d {
            if !(scale_tril[(i, i)] > 0.0) {
                return Err(Error::InvalidArgument(
                    "scale_tril diagonal must be strictly positive".into(),
                ));
            }
            for j in (i + 1)..d {
                if scale_tril[(i, j)] != 0.0 {
                    return Err(Error::InvalidArgument(
                        "scale_tril must be lower triangular".into(),
                    ));
                }
            }
        }
        if mu.iter().chain(scale_tril.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("parameters must be finite".into()));
        }
        Ok(Self { mu, scale_tril })
    }

    /// Build from a covariance matrix through its Cholesky factor.
    pub fn from_covariance(mu: Vec<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let chol = cov.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        Self::new(mu, chol.l())
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.scale_tril * self.scale_tril.transpose()
    }

    /// Marginal standard deviations, `sqrt(diag(L L^T))`.
    pub fn sd(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| self.scale_tril.row(i).norm())
            .collect()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(FamilyKind::FullRank.num_params(d));
        out.extend_from_slice(&self.mu);
        for i in 0..d {
            for j in 0..i {
                out.push(self.scale_tril[(i, j)]);
            }
        }
        for i in 0..d {
            out.push(self.scale_tril[(i, i)].ln());
        }
        out
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        let d = FamilyKind::FullRank
            .dim_from_num_params(flat.len())
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "{} is not a valid full-rank parameter length",
                    flat.len()
                ))
            })?;
        let mu = flat[..d].to_vec();
        let mut l = DMatrix::zeros(d, d);
        let mut idx = d;
        for i in 0..d {
            for j in 0..i {
                l[(i, j)] = flat[idx];
                idx += 1;
            }
        }
        for i in 0..d {
            l[(i, i)] = flat[idx].exp();
            idx += 1;
        }
        Self::new(mu, l)
    }

    fn log_det_scale(&self) -> f64 {
        (0..self.dim()).map(|i| self.scale_tril[(i, i)].ln()).sum()
    }

    /// `KL(self || other)` using triangular solves against `other`'s factor.
    pub fn kl_to(&self, other: &Self) -> Result<f64> {
        let d = self.dim();
        if other.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: other.dim(),
            });
        }
        let a = other
            .scale_tril
            .solve_lower_triangular(&self.scale_tril)
            .ok_or(Error::NotPositiveDefinite)?;
        let diff = DVector::from_iterator(d, (0..d).map(|i| other.mu[i] - self.mu[i]));
        let y = other
            .scale_tril
            .solve_lower_triangular(&diff)
            .ok_or(Error::NotPositiveDefinite)?;
        let trace = a.norm_squared();
        let maha = y.norm_squared();
        let kl = 0.5 * (trace + maha - d as f64) + other.log_det_scale() - self.log_det_scale();
        Ok(kl.max(0.0))
    }
}

/// A member of either Gaussian family.
#[derive(Clone, Debug, PartialEq)]
pub enum Gaussian {
    MeanField(MeanFieldGaussian),
    FullRank(FullRankGaussian),
}

impl From<MeanFieldGaussian> for Gaussian {
    fn from(p: MeanFieldGaussian) -> Self {
        Gaussian::MeanField(p)
    }
}

impl From<FullRankGaussian> for Gaussian {
    fn from(p: FullRankGaussian) -> Self {
        Gaussian::FullRank(p)
    }
}

impl Gaussian {
    pub fn from_flat(kind: FamilyKind, flat: &[f64]) -> Result<Self> {
        Ok(match kind {
            FamilyKind::MeanField => MeanFieldGaussian::from_flat(flat)?.into(),
            FamilyKind::FullRank => FullRankGaussian::from_flat(flat)?.into(),
        })
    }

    /// The standard normal member of `kind` in `d` dimensions.
    pub fn standard(kind: FamilyKind, d: usize) -> Self {
        let mf = MeanFieldGaussian::standard(d);
        match kind {
            FamilyKind::MeanField => mf.into(),
            FamilyKind::FullRank => mf.to_full_rank().into(),
        }
    }

    pub fn kind(&self) -> FamilyKind {
        match self {
            Gaussian::MeanField(_) => FamilyKind::MeanField,
            Gaussian::FullRank(_) => FamilyKind::FullRank,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Gaussian::MeanField(p) => p.dim(),
            Gaussian::FullRank(p) => p.dim(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        match self {
            Gaussian::MeanField(p) => p.to_flat(),
            Gaussian::FullRank(p) => p.to_flat(),
        }
    }

    pub fn mean(&self) -> &[f64] {
        match self {
            Gaussian::MeanField(p) => &p.tau,
            Gaussian::FullRank(p) => &p.mu,
        }
    }

    /// Marginal standard deviations.
    pub fn sd(&self) -> Vec<f64> {
        match self {
            Gaussian::MeanField(p) => p.sd(),
            Gaussian::FullRank(p) => p.sd(),
        }
    }

    /// Reparameterization transform: `tau + exp(psi) * z` or `mu + L z`.
    pub fn sample(&self, noise: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        if noise.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: noise.len(),
            });
        }
        Ok(match self {
            Gaussian::MeanField(p) => (0..d)
                .map(|i| p.tau[i] + p.psi[i].exp() * noise[i])
                .collect(),
            Gaussian::FullRank(p) => (0..d)
                .map(|i| {
                    let mut v = p.mu[i];
                    for j in 0..=i {
                        v += p.scale_tril[(i, j)] * noise[j];
                    }
                    v
                })
                .collect(),
        })
    }

    pub fn entropy(&self) -> f64 {
        let d = self.dim() as f64;
        let log_scale: f64 = match self {
            Gaussian::MeanField(p) => p.psi.iter().sum(),
            Gaussian::FullRank(p) => p.log_det_scale(),
        };
        log_scale + 0.5 * d * (1.0 + (2.0 * PI).ln())
    }

    pub fn kl_to(&self, other: &Gaussian) -> Result<f64> {
        match (self, other) {
            (Gaussian::MeanField(p), Gaussian::MeanField(q)) => p.kl_to(q),
            (Gaussian::FullRank(p), Gaussian::FullRank(q)) => p.kl_to(q),
            _ => Err(Error::FamilyMismatch(self.kind().name(), other.kind().name())),
        }
    }

    /// Symmetrized KL divergence `KL(p||q) + KL(q||p)`.
    pub fn skl(&self, other: &Gaussian) -> Result<f64> {
        match (self, other) {
            (Gaussian::MeanField(p), Gaussian::MeanField(q)) => p.skl(q),
            (Gaussian::FullRank(p), Gaussian::FullRank(q)) => Ok(p.kl_to(q)? + q.kl_to(p)?),
            _ => Err(Error::FamilyMismatch(self.kind().name(), other.kind().name())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn mf(tau: &[f64], psi: &[f64]) -> Gaussian {
        MeanFieldGaussian::new(tau.to_vec(), psi.to_vec()).unwrap().into()
    }

    #[test]
    fn sample_transforms() {
        assert_eq!(mf(&[0.0], &[0.0]).sample(&[1.5]).unwrap(), vec![1.5]);
        assert_relative_eq!(
            mf(&[2.0], &[3f64.ln()]).sample(&[1.0]).unwrap()[0],
            5.0,
            epsilon = 1e-12
        );
        let fr = Gaussian::standard(FamilyKind::FullRank, 3);
        assert_eq!(fr.sample(&[0.3, -1.0, 2.0]).unwrap(), vec![0.3, -1.0, 2.0]);
        assert!(matches!(
            fr.sample(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn skl_examples() {
        assert_eq!(mf(&[0.0], &[0.0]).skl(&mf(&[0.0], &[0.0])).unwrap(), 0.0);
        assert_relative_eq!(
            mf(&[0.0], &[0.0]).skl(&mf(&[1.0], &[0.0])).unwrap(),
            1.0,
            epsilon = 1e-14
        );
        assert_relative_eq!(
            mf(&[0.0], &[0.0]).skl(&mf(&[0.0], &[2f64.ln()])).unwrap(),
            1.125,
            epsilon = 1e-14
        );
    }

    #[test]
    fn kl_examples() {
        let std = mf(&[0.0], &[0.0]);
        assert_eq!(std.kl_to(&std).unwrap(), 0.0);
        assert_relative_eq!(mf(&[1.0], &[0.0]).kl_to(&std).unwrap(), 0.5, epsilon = 1e-14);
        let wide = mf(&[0.0], &[2f64.ln()]);
        assert_relative_eq!(
            wide.kl_to(&std).unwrap(),
            (4.0 - 1.0 - 4f64.ln()) / 2.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn entropy_examples() {
        assert_relative_eq!(mf(&[0.0], &[0.0]).entropy(), STD_NORMAL_ENTROPY, epsilon = 1e-14);
        assert_relative_eq!(
            mf(&[0.0, 0.0], &[0.0, 0.0]).entropy(),
            2.0 * STD_NORMAL_ENTROPY,
            epsilon = 1e-14
        );
        assert_relative_eq!(
            Gaussian::standard(FamilyKind::FullRank, 2).entropy(),
            2.0 * STD_NORMAL_ENTROPY,
            epsilon = 1e-14
        );
    }

    #[test]
    fn family_mismatch_is_rejected() {
        let a = Gaussian::standard(FamilyKind::MeanField, 2);
        let b = Gaussian::standard(FamilyKind::FullRank, 2);
        assert!(matches!(a.skl(&b), Err(Error::FamilyMismatch(..))));
        let c = Gaussian::standard(FamilyKind::MeanField, 3);
        assert!(matches!(a.skl(&c), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn full_rank_flat_layout() {
        // mu, then strictly-lower row-major, then log diagonal.
        let l = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.5, 1.0, 0.0, -0.3, 0.7, 3.0]);
        let p = FullRankGaussian::new(vec![1.0, 2.0, 3.0], l).unwrap();
        let flat = p.to_flat();
        assert_eq!(&flat[..6], &[1.0, 2.0, 3.0, 0.5, -0.3, 0.7]);
        assert_relative_eq!(flat[6], 2f64.ln());
        assert_relative_eq!(flat[8], 3f64.ln());
        let back = FullRankGaussian::from_flat(&flat).unwrap();
        for (a, b) in back.scale_tril.iter().zip(p.scale_tril.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn full_rank_validation() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(FullRankGaussian::new(vec![0.0, 0.0], bad).is_err());
        let neg = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        assert!(FullRankGaussian::new(vec![0.0, 0.0], neg).is_err());
        assert_eq!(FamilyKind::FullRank.dim_from_num_params(9), Some(3));
        assert_eq!(FamilyKind::FullRank.dim_from_num_params(8), None);
    }

    #[test]
    fn full_rank_matches_mean_field_on_diagonal() {
        let p = MeanFieldGaussian::new(vec![0.3, -1.0], vec![0.2, -0.4]).unwrap();
        let q = MeanFieldGaussian::new(vec![1.1, 0.5], vec![-0.7, 0.9]).unwrap();
        let mf_skl = p.skl(&q).unwrap();
        let fr_skl = Gaussian::from(p.to_full_rank())
            .skl(&q.to_full_rank().into())
            .unwrap();
        assert_relative_eq!(mf_skl, fr_skl, max_relative = 1e-12);
    }

    fn mf_strategy(d: usize) -> impl Strategy<Value = MeanFieldGaussian> {
        (
            prop::collection::vec(-3.0..3.0f64, d),
            prop::collection::vec(-1.5..1.5f64, d),
        )
            .prop_map(|(t, p)| MeanFieldGaussian::new(t, p).unwrap())
    }

    fn tril_strategy(d: usize) -> impl Strategy<Value = FullRankGaussian> {
        let n = FamilyKind::FullRank.num_params(d);
        prop::collection::vec(-1.0..1.0f64, n)
            .prop_map(|v| FullRankGaussian::from_flat(&v).unwrap())
    }

    proptest! {
        #[test]
        fn skl_equals_sum_of_kls(p in mf_strategy(4), q in mf_strategy(4)) {
            let skl = p.skl(&q).unwrap();
            let sum = p.kl_to(&q).unwrap() + q.kl_to(&p).unwrap();
            prop_assert!((skl - sum).abs() <= 1e-12 * skl.abs().max(1e-3));
            prop_assert!((skl - q.skl(&p).unwrap()).abs() <= 1e-12 * skl.max(1e-3));
        }

        #[test]
        fn mean_field_skl_factorizes(p in mf_strategy(5), q in mf_strategy(5)) {
            let total = p.skl(&q).unwrap();
            let by_dim: f64 = (0..5).map(|i| {
                let a = MeanFieldGaussian::new(vec![p.tau[i]], vec![p.psi[i]]).unwrap();
                let b = MeanFieldGaussian::new(vec![q.tau[i]], vec![q.psi[i]]).unwrap();
                a.skl(&b).unwrap()
            }).sum();
            prop_assert!((total - by_dim).abs() <= 1e-12 * total.max(1e-3));
        }

        #[test]
        fn mean_field_skl_permutation_invariant(
            p in mf_strategy(4),
            q in mf_strategy(4),
            perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
        ) {
            let permute = |g: &MeanFieldGaussian| MeanFieldGaussian::new(
                perm.iter().map(|&i| g.tau[i]).collect(),
                perm.iter().map(|&i| g.psi[i]).collect(),
            ).unwrap();
            let a = p.skl(&q).unwrap();
            let b = permute(&p).skl(&permute(&q)).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-3));
        }

        #[test]
        fn full_rank_skl_symmetric_and_nonnegative(p in tril_strategy(3), q in tril_strategy(3)) {
            let gp = Gaussian::from(p.clone());
            let gq = Gaussian::from(q.clone());
            let a = gp.skl(&gq).unwrap();
            let b = gq.skl(&gp).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert!((a - b).abs() <= 1e-10 * a.max(1e-6));
            prop_assert!(gp.skl(&gp).unwrap().abs() < 1e-12);
        }

        #[test]
        fn flat_round_trip(p in tril_strategy(4)) {
            let back = FullRankGaussian::from_flat(&p.to_flat()).unwrap();
            for (a, b) in back.scale_tril.iter().zip(p.scale_tril.iter()) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }
}
