//! Accuracy-driven termination: SKL and iteration-count regressions, the
//! inefficiency index, and the outer loop over decreasing learning rates.

use rand::Rng;
use serde::Serialize;

use crate::diagnostics::{split_rhat_chains, DistanceConfig, SasaPlusConfig};
use crate::error::{Error, Result};
use crate::faso::{run_faso, CheckRecord, CostRatio, Detector, FasoConfig};
use crate::family::{FamilyKind, Gaussian};
use crate::gradient::ElboGradient;
use crate::optim::{OptimizerHyper, OptimizerKind};
use crate::rwm::{run_chains, RwmConfig};
use crate::target::TargetModel;

/// Lower truncation of the regression noise scale. Without it, data that the
/// model fits exactly make the weighted posterior improper as `sigma -> 0`.
pub const SIGMA_FLOOR: f64 = 1e-4;

/// Largest acceptable split-R-hat of the regression sampler.
pub const SAMPLER_RHAT_MAX: f64 = 1.05;

/// `w_t = {1 + (T - t)^2 / 9}^{-1/4}` for `t = 1..=T`.
pub fn regression_weights(t_total: usize) -> Vec<f64> {
    (1..=t_total).map(|t| weight(t_total, t)).collect()
}

fn weight(t_total: usize, t: usize) -> f64 {
    let gap = (t_total - t) as f64;
    (1.0 + gap * gap / 9.0).powf(-0.25)
}

/// One learning-rate epoch of the outer loop.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub t: usize,
    pub gamma_t: f64,
    pub k_t: usize,
    /// SKL between this epoch's average and the previous one; `None` at `t = 0`.
    pub delta_t: Option<f64>,
    pub average_params: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SklRegressionFit {
    #[serde(rename = "log_C_mean")]
    pub log_c_mean: f64,
    pub kappa_mean: f64,
    pub sigma_mean: f64,
    #[serde(rename = "log_C_sd")]
    pub log_c_sd: f64,
    /// Rows of `(log C, kappa, sigma)`.
    #[serde(skip)]
    pub posterior_draws: Vec<[f64; 3]>,
    pub fixed_kappa: bool,
    /// Set when the sampler failed its health check and weighted least
    /// squares estimates were returned instead.
    pub fallback: bool,
    pub sampler_rhat_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SklPoint {
    /// Epoch index, starting at 1.
    pub t: usize,
    pub gamma: f64,
    pub delta: f64,
}

fn log_ratio_term(rho: f64, kappa: f64) -> f64 {
    2.0 * (rho.powf(-kappa) - 1.0).ln()
}

/// Weighted least squares for `log C` at fixed `kappa`, with its weighted SSE.
fn wls_log_c(pts: &[(f64, f64, f64)], rho: f64, kappa: f64) -> (f64, f64) {
    let a = log_ratio_term(rho, kappa);
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let lc = pts
        .iter()
        .map(|&(lg, ld, w)| w * (ld - a - 2.0 * kappa * lg))
        .sum::<f64>()
        / sw;
    let sse = pts
        .iter()
        .map(|&(lg, ld, w)| {
            let r = ld - lc - a - 2.0 * kappa * lg;
            w * r * r
        })
        .sum();
    (lc, sse)
}

/// Point estimate of `(log C, kappa, residual sd)` by weighted least squares;
/// with free `kappa` the profile SSE is minimized over `[0.01, 1]`.
fn wls_fit(pts: &[(f64, f64, f64)], rho: f64, fixed_kappa: bool) -> (f64, f64, f64) {
    let kappa = if fixed_kappa || pts.len() < 2 {
        1.0
    } else {
        let f = |k: f64| wls_log_c(pts, rho, k).1;
        let (mut lo, mut hi) = (0.01, 1.0);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = hi - g * (hi - lo);
        let mut d = lo + g * (hi - lo);
        for _ in 0..100 {
            if f(c) < f(d) {
                hi = d;
            } else {
                lo = c;
            }
            c = hi - g * (hi - lo);
            d = lo + g * (hi - lo);
        }
        let k = 0.5 * (lo + hi);
        if f(1.0) <= f(k) { 1.0 } else { k }
    };
    let (lc, sse) = wls_log_c(pts, rho, kappa);
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let sd = (sse / sw).sqrt();
    (lc, kappa, sd)
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Fit `log delta_t = log C + 2 log(rho^{-kappa} - 1) + 2 kappa log gamma_t + eta_t`
/// under a weighted likelihood with Cauchy priors, returning posterior means.
pub fn fit_skl_regression<R: Rng + ?Sized>(
    points: &[SklPoint],
    rho: f64,
    fixed_kappa: bool,
    sampler: &RwmConfig,
    rng: &mut R,
) -> Result<SklRegressionFit> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidArgument("rho must lie in (0, 1)".into()));
    }
    let t_total = points.iter().map(|p| p.t).max().unwrap_or(0);
    let pts: Vec<(f64, f64, f64)> = points
        .iter()
        .filter(|p| p.delta > 0.0 && p.delta.is_finite())
        .map(|p| (p.gamma.ln(), p.delta.ln(), weight(t_total, p.t)))
        .collect();
    if pts.is_empty() {
        return Err(Error::Fit("no SKL signal: every delta is zero".into()));
    }
    let (lc0, k0, sd0) = wls_fit(&pts, rho, fixed_kappa);
    let s0 = (sd0.max(2.0 * SIGMA_FLOOR) - SIGMA_FLOOR).ln();

    // Unconstrained coordinates: (log C, s) or (log C, logit kappa, s),
    // with sigma = SIGMA_FLOOR + exp(s).
    let dim = if fixed_kappa { 2 } else { 3 };
    let unpack = |u: &[f64]| -> (f64, f64, f64, f64) {
        let (kappa, jac_k, s) = if fixed_kappa {
            (1.0, 0.0, u[1])
        } else {
            let k = logistic(u[1]);
            (k, k.ln() + (1.0 - k).ln(), u[2])
        };
        (u[0], kappa, SIGMA_FLOOR + s.exp(), jac_k + s)
    };
    let log_post = |u: &[f64]| -> f64 {
        let (lc, kappa, sigma, log_jac) = unpack(u);
        if !(kappa > 0.0 && kappa <= 1.0) || !sigma.is_finite() {
            return f64::NEG_INFINITY;
        }
        let a = log_ratio_term(rho, kappa);
        let mut ll = 0.0;
        for &(lg, ld, w) in &pts {
            let r = ld - lc - a - 2.0 * kappa * lg;
            ll += w * (-sigma.ln() - 0.5 * r * r / (sigma * sigma));
        }
        let prior = -(1.0 + (lc / 10.0).powi(2)).ln() - (1.0 + (sigma / 10.0).powi(2)).ln();
        ll + prior + log_jac
    };

    let mut init = vec![lc0];
    if !fixed_kappa {
        let k = k0.clamp(0.02, 0.98);
        init.push((k / (1.0 - k)).ln());
    }
    init.push(s0);
    let inits: Vec<Vec<f64>> = (0..sampler.chains)
        .map(|c| {
            let mut v = init.clone();
            v[0] += 0.05 * c as f64;
            v
        })
        .collect();
    let scale = vec![0.1; dim];
    let chains = run_chains(&log_post, &inits, &scale, sampler, rng);

    let draws: Vec<[f64; 3]> = chains
        .iter()
        .flat_map(|c| c.draws.iter())
        .map(|u| {
            let (lc, k, s, _) = unpack(u);
            [lc, k, s]
        })
        .collect();
    let finite = !draws.is_empty() && draws.iter().all(|d| d.iter().all(|v| v.is_finite()));
    let mut rhat_max: f64 = 0.0;
    if finite {
        for j in 0..3 {
            if fixed_kappa && j == 1 {
                continue;
            }
            let cols: Vec<Vec<f64>> = chains
                .iter()
                .map(|c| {
                    c.draws
                        .iter()
                        .map(|u| {
                            let (lc, k, s, _) = unpack(u);
                            [lc, k, s][j]
                        })
                        .collect()
                })
                .collect();
            let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
            let r = split_rhat_chains(&refs).unwrap_or(f64::INFINITY);
            rhat_max = rhat_max.max(r);
        }
    } else {
        rhat_max = f64::INFINITY;
    }

    if !finite || !(rhat_max <= SAMPLER_RHAT_MAX) {
        return Ok(SklRegressionFit {
            log_c_mean: lc0,
            kappa_mean: k0.clamp(0.01, 1.0),
            sigma_mean: sd0.max(SIGMA_FLOOR),
            log_c_sd: f64::NAN,
            posterior_draws: draws,
            fixed_kappa,
            fallback: true,
            sampler_rhat_max: rhat_max,
        });
    }
    let n = draws.len() as f64;
    let mean_of = |j: usize| draws.iter().map(|d| d[j]).sum::<f64>() / n;
    let log_c_mean = mean_of(0);
    let log_c_sd =
        (draws.iter().map(|d| (d[0] - log_c_mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    Ok(SklRegressionFit {
        log_c_mean,
        kappa_mean: if fixed_kappa { 1.0 } else { mean_of(1) },
        sigma_mean: mean_of(2),
        log_c_sd,
        posterior_draws: draws,
        fixed_kappa,
        fallback: false,
        sampler_rhat_max: rhat_max,
    })
}

/// `rho^kappa + xi / (C^{1/2} gamma^kappa)` with `C = exp(log_C_mean)`.
pub fn estimate_rskl(fit: &SklRegressionFit, gamma_t: f64, rho: f64, xi: f64) -> f64 {
    let k = fit.kappa_mean;
    rho.powf(k) + xi / ((0.5 * fit.log_c_mean).exp() * gamma_t.powf(k))
}

/// Weighted least squares `log K_t = alpha log gamma_t + beta`, weights by
/// recency. Returns `(alpha, beta)`.
pub fn fit_iteration_regression(gammas: &[f64], iterations: &[f64]) -> Result<(f64, f64)> {
    let n = gammas.len();
    if n != iterations.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: iterations.len(),
        });
    }
    if n < 2 {
        return Err(Error::Fit("iteration regression needs at least two epochs".into()));
    }
    if iterations.iter().any(|k| !(*k > 0.0)) {
        return Err(Error::Fit("iteration counts must be positive".into()));
    }
    let w = regression_weights(n);
    let x: Vec<f64> = gammas.iter().map(|g| g.ln()).collect();
    let y: Vec<f64> = iterations.iter().map(|k| k.ln()).collect();
    let sw: f64 = w.iter().sum();
    let xm = w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() / sw;
    let ym = w.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = (0..n).map(|i| w[i] * (x[i] - xm).powi(2)).sum();
    let sxy: f64 = (0..n).map(|i| w[i] * (x[i] - xm) * (y[i] - ym)).sum();
    if !(sxx > 1e-300) {
        return Err(Error::Fit("singular design: all learning rates equal".into()));
    }
    let alpha = sxy / sxx;
    Ok((alpha, ym - alpha * xm))
}

/// Predicted iterations at the next learning rate; falls back to the
/// current count when the intercept is non-negative.
pub fn predict_next_k(alpha: f64, beta: f64, gamma_next: f64, k_curr: f64) -> f64 {
    if beta < 0.0 {
        gamma_next.powf(alpha) * beta.exp()
    } else {
        k_curr
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TerminationDecision {
    pub rskl_hat: f64,
    pub ri_hat: f64,
    pub inefficiency_hat: f64,
    pub terminate: bool,
    #[serde(rename = "predicted_K_next")]
    pub predicted_k_next: f64,
}

pub fn decide_termination(
    rskl_hat: f64,
    k_curr: f64,
    predicted_k_next: f64,
    k0: f64,
    tau: f64,
) -> Result<TerminationDecision> {
    if k_curr < 0.0 || k0 < 0.0 || k_curr + k0 <= 0.0 {
        return Err(Error::InvalidArgument(
            "K_curr and K0 must be non-negative and not both zero".into(),
        ));
    }
    let ri_hat = predicted_k_next / (k_curr + k0);
    let inefficiency_hat = rskl_hat * ri_hat;
    Ok(TerminationDecision {
        rskl_hat,
        ri_hat,
        inefficiency_hat,
        terminate: inefficiency_hat > tau,
        predicted_k_next,
    })
}

/// Whether the SKL slope may be pinned to one for this optimizer and family.
pub fn default_fixed_kappa(optimizer: OptimizerKind, family: FamilyKind) -> bool {
    optimizer.has_linear_bias() && family == FamilyKind::MeanField
}

#[derive(Clone, Debug, PartialEq)]
pub struct RaabbviConfig {
    pub family: FamilyKind,
    pub optimizer: OptimizerKind,
    pub hyper: OptimizerHyper,
    pub gamma0: f64,
    pub rho: f64,
    pub w_min: usize,
    pub xi: f64,
    pub tau: f64,
    pub epsilon: f64,
    pub mc_samples: usize,
    pub k0: usize,
    pub k_max: usize,
    pub detector: Detector,
    pub cost_ratio: CostRatio,
    pub warm_start_rmsprop: bool,
    /// `None` applies [`default_fixed_kappa`].
    pub fixed_kappa: Option<bool>,
    pub sampler: RwmConfig,
}

impl Default for RaabbviConfig {
    fn default() -> Self {
        Self {
            family: FamilyKind::MeanField,
            optimizer: OptimizerKind::AvgAdam,
            hyper: OptimizerHyper::default(),
            gamma0: 0.3,
            rho: 0.5,
            w_min: 200,
            xi: 0.1,
            tau: 1.0,
            epsilon: 0.1,
            mc_samples: 10,
            k0: 1000,
            k_max: 100_000,
            detector: Detector::Rhat,
            cost_ratio: CostRatio::OpCount,
            warm_start_rmsprop: false,
            fixed_kappa: None,
            sampler: RwmConfig::default(),
        }
    }
}

impl RaabbviConfig {
    pub fn faso_config(&self, gamma: f64, k_max: usize, optimizer: OptimizerKind) -> FasoConfig {
        FasoConfig {
            gamma,
            w_min: self.w_min,
            epsilon: self.epsilon,
            k_max,
            optimizer,
            hyper: self.hyper,
            family: self.family,
            detector: self.detector,
            cost_ratio: self.cost_ratio,
            check_every: None,
        }
    }
}

/// Per-epoch trace line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochSummary {
    pub t: usize,
    pub gamma: f64,
    #[serde(rename = "K_t")]
    pub k_t: usize,
    pub delta_t: Option<f64>,
    #[serde(rename = "log_C_mean")]
    pub log_c_mean: Option<f64>,
    pub kappa_mean: Option<f64>,
    pub rskl_hat: Option<f64>,
    pub ri_hat: Option<f64>,
    pub inefficiency_hat: Option<f64>,
    pub terminated: bool,
    pub fit_fallback: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerminatedReason {
    /// The inefficiency index exceeded its threshold.
    InefficiencyRule,
    /// The iteration budget ran out between epochs.
    MaxIterations,
    /// An epoch did not reach the accuracy target within the budget.
    FailedToConverge { estimated_error: Option<f64> },
    Error { message: String },
}

impl TerminatedReason {
    pub fn is_success(&self) -> bool {
        matches!(self, TerminatedReason::InefficiencyRule)
    }

    pub fn label(&self) -> &'static str {
        match self {
            TerminatedReason::InefficiencyRule => "inefficiency_rule",
            TerminatedReason::MaxIterations => "max_iterations",
            TerminatedReason::FailedToConverge { .. } => "failed_to_converge",
            TerminatedReason::Error { .. } => "error",
        }
    }

    /// Human-readable warning for the non-success paths.
    pub fn warning(&self) -> Option<String> {
        match self {
            TerminatedReason::InefficiencyRule => None,
            TerminatedReason::MaxIterations => {
                Some("Warning: maximum number of iterations reached".into())
            }
            TerminatedReason::FailedToConverge { estimated_error } => Some(match estimated_error {
                Some(e) => format!("Warning: failed to converge. Estimated error is {e}"),
                None => "Warning: failed to converge. Estimated error is unknown".into(),
            }),
            TerminatedReason::Error { message } => Some(format!("Warning: {message}")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RaabbviResult {
    pub final_params: Vec<f64>,
    pub epoch_records: Vec<EpochRecord>,
    pub decision_trace: Vec<EpochSummary>,
    pub checks: Vec<CheckRecord>,
    pub terminated_reason: TerminatedReason,
    pub total_iterations: usize,
}

/// Outer loop: run fixed learning-rate epochs at `gamma0 * rho^t` until the
/// inefficiency index says another epoch is not worth its cost.
pub fn run_raabbvi<R: Rng + ?Sized>(
    cfg: &RaabbviConfig,
    target: &dyn TargetModel,
    init: Option<&Gaussian>,
    rng: &mut R,
) -> Result<RaabbviResult> {
    if !(cfg.rho > 0.0 && cfg.rho < 1.0) {
        return Err(Error::InvalidArgument("rho must lie in (0, 1)".into()));
    }
    let d = target.dim();
    let start = match init {
        Some(g) => {
            if g.kind() != cfg.family || g.dim() != d {
                return Err(Error::InvalidArgument(
                    "initial parameters do not match family and target".into(),
                ));
            }
            g.clone()
        }
        None => Gaussian::standard(cfg.family, d),
    };
    let fixed_kappa = cfg
        .fixed_kappa
        .unwrap_or_else(|| default_fixed_kappa(cfg.optimizer, cfg.family));
    let mut grad = ElboGradient::new(target, cfg.family, cfg.mc_samples)?;

    let mut curr = start.to_flat();
    let mut gamma = cfg.gamma0;
    let mut k_total = 0usize;
    let mut t = 0usize;
    let mut records: Vec<EpochRecord> = Vec::new();
    let mut trace: Vec<EpochSummary> = Vec::new();
    let mut checks: Vec<CheckRecord> = Vec::new();

    let reason = loop {
        if k_total >= cfg.k_max {
            break TerminatedReason::MaxIterations;
        }
        let prev = curr.clone();
        let optimizer = if t == 0 && cfg.warm_start_rmsprop {
            OptimizerKind::Rmsprop
        } else {
            cfg.optimizer
        };
        let fcfg = cfg.faso_config(gamma, cfg.k_max - k_total, optimizer);
        let res = run_faso(&mut grad, &curr, &fcfg, rng, k_total as u64)?;
        checks.extend(res.checks.iter().cloned());
        k_total += res.iterations_used;
        curr = res.iterate_average.clone();
        if !res.success {
            break match res.failure {
                Some(f) => TerminatedReason::Error {
                    message: format!("step {}: {}", f.step, f.message),
                },
                None => TerminatedReason::FailedToConverge {
                    estimated_error: res.final_gate.map(|g| g.mean_relative_mcse),
                },
            };
        }

        let mut summary = EpochSummary {
            t,
            gamma,
            k_t: res.iterations_used,
            delta_t: None,
            log_c_mean: None,
            kappa_mean: None,
            rskl_hat: None,
            ri_hat: None,
            inefficiency_hat: None,
            terminated: false,
            fit_fallback: None,
        };
        let delta = if t >= 1 {
            let a = Gaussian::from_flat(cfg.family, &prev)?;
            let b = Gaussian::from_flat(cfg.family, &curr)?;
            Some(a.skl(&b)?)
        } else {
            None
        };
        summary.delta_t = delta;
        records.push(EpochRecord {
            t,
            gamma_t: gamma,
            k_t: res.iterations_used,
            delta_t: delta,
            average_params: curr.clone(),
        });

        if t >= 1 {
            let points: Vec<SklPoint> = records
                .iter()
                .filter_map(|r| {
                    r.delta_t.map(|delta| SklPoint {
                        t: r.t,
                        gamma: r.gamma_t,
                        delta,
                    })
                })
                .collect();
            let fit = match fit_skl_regression(&points, cfg.rho, fixed_kappa, &cfg.sampler, rng) {
                Ok(f) => f,
                Err(e) => {
                    trace.push(summary);
                    break TerminatedReason::Error {
                        message: e.to_string(),
                    };
                }
            };
            let rskl = estimate_rskl(&fit, gamma, cfg.rho, cfg.xi);
            summary.log_c_mean = Some(fit.log_c_mean);
            summary.kappa_mean = Some(fit.kappa_mean);
            summary.rskl_hat = Some(rskl);
            summary.fit_fallback = Some(fit.fallback);
            if t >= 2 {
                let later: Vec<&EpochRecord> = records.iter().filter(|r| r.t >= 1).collect();
                let gammas: Vec<f64> = later.iter().map(|r| r.gamma_t).collect();
                let ks: Vec<f64> = later.iter().map(|r| r.k_t as f64).collect();
                let (alpha, beta) = match fit_iteration_regression(&gammas, &ks) {
                    Ok(v) => v,
                    Err(e) => {
                        trace.push(summary);
                        break TerminatedReason::Error {
                            message: e.to_string(),
                        };
                    }
                };
                let k_curr = res.iterations_used as f64;
                let predicted = predict_next_k(alpha, beta, cfg.rho * gamma, k_curr);
                let dec = decide_termination(rskl, k_curr, predicted, cfg.k0 as f64, cfg.tau)?;
                summary.ri_hat = Some(dec.ri_hat);
                summary.inefficiency_hat = Some(dec.inefficiency_hat);
                summary.terminated = dec.terminate;
                if dec.terminate {
                    trace.push(summary);
                    break TerminatedReason::InefficiencyRule;
                }
            }
        }
        trace.push(summary);
        gamma *= cfg.rho;
        t += 1;
    };

    Ok(RaabbviResult {
        final_params: curr,
        epoch_records: records,
        decision_trace: trace,
        checks,
        terminated_reason: reason,
        total_iterations: k_total,
    })
}

/// Detector configuration by name, with default tuning.
pub fn detector_from_name(name: &str) -> Result<Detector> {
    match name {
        "rhat" => Ok(Detector::Rhat),
        "sasa_plus" => Ok(Detector::SasaPlus(SasaPlusConfig::default())),
        "distance" => Ok(Detector::Distance(DistanceConfig::default())),
        other => Err(Error::InvalidArgument(format!("unknown detector `{other}`"))),
    }
}
