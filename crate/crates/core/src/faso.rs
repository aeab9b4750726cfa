//! Fixed learning-rate optimization with stationarity detection and
//! MCSE-gated iterate averaging.

use std::time::{Duration, Instant};

use rand::Rng;
use serde::Serialize;

use crate::diagnostics::{
    distance_based_converged, invariant_statistic, is_distance_checkpoint, max_window,
    rhat_max_window_search, sasa_plus_window, DiagnosticsReport, DistanceConfig, IterateHistory,
    SasaPlusConfig,
};
use crate::error::{Error, Result};
use crate::family::FamilyKind;
use crate::gradient::StochasticGradient;
use crate::optim::{step, Optimizer, OptimizerHyper, OptimizerKind};

/// Minimum per-coordinate ESS before an MCSE is trusted.
pub const ESS_FLOOR: f64 = 50.0;

/// Upper clamp on the estimated optimization-to-check cost ratio.
pub const MAX_COST_RATIO: f64 = 1e3;

/// Window growth factor `1 + (1 + r)^{-1/2}`.
pub fn chi_of_r(r: f64) -> f64 {
    debug_assert!(r >= 0.0);
    1.0 + (1.0 + r).powf(-0.5)
}

/// Worst-case cost of the `chi(r)` recheck schedule relative to the optimal
/// schedule, `(2 + r + 2 sqrt(1 + r)) / (1 + r)`.
pub fn g_of_r(r: f64) -> f64 {
    (2.0 + r + 2.0 * (1.0 + r).sqrt()) / (1.0 + r)
}

/// MCSE recheck windows `W_j = chi^j W_conv`.
#[derive(Clone, Debug, PartialEq)]
pub struct RecheckSchedule {
    pub r: f64,
    pub chi: f64,
    w_conv: usize,
    j: u32,
    pub next_window: usize,
}

impl RecheckSchedule {
    pub fn new(r: f64, w_conv: usize) -> Self {
        let r = if r.is_finite() { r.clamp(0.0, MAX_COST_RATIO) } else { MAX_COST_RATIO };
        Self {
            r,
            chi: chi_of_r(r),
            w_conv,
            j: 0,
            next_window: w_conv,
        }
    }

    /// Unrounded window size `chi^j W_conv`.
    pub fn window_real(&self, j: u32) -> f64 {
        self.chi.powi(j as i32) * self.w_conv as f64
    }

    /// Move to the next window; sizes are rounded up and strictly increase.
    pub fn advance(&mut self) -> usize {
        self.j += 1;
        let w = self.window_real(self.j).ceil() as usize;
        self.next_window = w.max(self.next_window + 1);
        self.next_window
    }
}

/// Outcome of the MCSE accuracy check on one window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GateOutcome {
    pub pass: bool,
    pub mean_relative_mcse: f64,
    pub ess_min: f64,
}

/// Apply the MCSE gate to a computed report. `window_mean` is the iterate
/// average over the same window.
pub fn gate_from_report(
    report: &DiagnosticsReport,
    window_mean: &[f64],
    family: FamilyKind,
    epsilon: f64,
) -> GateOutcome {
    let m = report.mcse.len();
    let ess_min = report.ess_min();
    let mean_relative_mcse = match family {
        FamilyKind::MeanField => {
            let d = m / 2;
            let tau_term = (0..d)
                .map(|i| report.mcse[i] / window_mean[d + i].exp())
                .sum::<f64>()
                / d as f64;
            let psi_term = report.mcse[d..].iter().sum::<f64>() / d as f64;
            tau_term.max(psi_term)
        }
        FamilyKind::FullRank => report.mcse.iter().sum::<f64>() / m as f64,
    };
    GateOutcome {
        pass: mean_relative_mcse < epsilon && ess_min >= ESS_FLOOR,
        mean_relative_mcse,
        ess_min,
    }
}

/// MCSE gate on the trailing `window` iterates of `history`.
pub fn mcse_gate(
    history: &IterateHistory,
    window: usize,
    family: FamilyKind,
    epsilon: f64,
) -> Result<(GateOutcome, DiagnosticsReport)> {
    let report = DiagnosticsReport::compute(history, window)?;
    let avg = history.window_mean(window);
    Ok((gate_from_report(&report, &avg, family, epsilon), report))
}

/// Largest per-coordinate relative errors `|sigma_hat - sigma_bar| / sigma_bar`
/// and `|tau_hat - tau_bar| / sigma_bar` between two mean-field members in
/// flat `(tau, psi)` layout.
pub fn mean_field_relative_errors(hat: &[f64], bar: &[f64]) -> (f64, f64) {
    let d = hat.len() / 2;
    let mut sigma_err: f64 = 0.0;
    let mut tau_err: f64 = 0.0;
    for i in 0..d {
        let sb = bar[d + i].exp();
        sigma_err = sigma_err.max((hat[d + i].exp() - sb).abs() / sb);
        tau_err = tau_err.max((hat[i] - bar[i]).abs() / sb);
    }
    (sigma_err, tau_err)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Detector {
    Rhat,
    SasaPlus(SasaPlusConfig),
    Distance(DistanceConfig),
}

impl Detector {
    pub fn name(&self) -> &'static str {
        match self {
            Detector::Rhat => "rhat",
            Detector::SasaPlus(_) => "sasa_plus",
            Detector::Distance(_) => "distance",
        }
    }
}

/// How the optimization-to-check cost ratio `r` is obtained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CostRatio {
    /// Count multiply-adds; reproducible across machines.
    OpCount,
    WallClock,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FasoConfig {
    pub gamma: f64,
    pub w_min: usize,
    pub epsilon: f64,
    pub k_max: usize,
    pub optimizer: OptimizerKind,
    pub hyper: OptimizerHyper,
    pub family: FamilyKind,
    pub detector: Detector,
    pub cost_ratio: CostRatio,
    /// Steps between stationarity checks; `None` means `w_min / 2`.
    pub check_every: Option<usize>,
}

impl FasoConfig {
    pub fn new(gamma: f64, family: FamilyKind) -> Self {
        Self {
            gamma,
            w_min: 200,
            epsilon: 0.1,
            k_max: 100_000,
            optimizer: OptimizerKind::AvgAdam,
            hyper: OptimizerHyper::default(),
            family,
            detector: Detector::Rhat,
            cost_ratio: CostRatio::OpCount,
            check_every: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument("gamma must be positive".into()));
        }
        if self.w_min < 8 {
            return Err(Error::InvalidArgument("w_min must be at least 8".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        if self.check_every == Some(0) {
            return Err(Error::InvalidArgument("check_every must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckPhase {
    Stationarity,
    Mcse,
}

/// One stationarity or accuracy check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRecord {
    /// Global step index.
    pub step: u64,
    pub phase: CheckPhase,
    pub rhat_max: Option<f64>,
    #[serde(rename = "W_opt")]
    pub w_opt: Option<usize>,
    pub mean_mcse: Option<f64>,
    pub ess_min: Option<f64>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FasoFailure {
    pub step: u64,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct FasoResult {
    pub iterations_used: usize,
    pub iterate_average: Vec<f64>,
    pub success: bool,
    /// Epoch-relative iteration at which stationarity was declared.
    pub k_conv: Option<usize>,
    pub final_window: usize,
    pub diagnostics_trace: Vec<DiagnosticsReport>,
    pub checks: Vec<CheckRecord>,
    pub final_gate: Option<GateOutcome>,
    pub cost_ratio: Option<f64>,
    pub chi: Option<f64>,
    pub failure: Option<FasoFailure>,
}

fn is_numeric_failure(e: &Error) -> bool {
    matches!(e, Error::NonFiniteTarget { .. } | Error::NonFiniteGradient { .. })
}

struct Stationary {
    k_conv: usize,
    schedule: Option<RecheckSchedule>,
    w_check: usize,
    w_conv: usize,
}

/// Run one fixed learning-rate epoch from `init`. `step_offset` is the
/// global index of the first step, used only for reporting.
pub fn run_faso<G, R>(
    grad_src: &mut G,
    init: &[f64],
    cfg: &FasoConfig,
    rng: &mut R,
    step_offset: u64,
) -> Result<FasoResult>
where
    G: StochasticGradient,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let m = grad_src.num_params();
    if init.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: init.len(),
        });
    }
    let mut opt = Optimizer::new(cfg.optimizer, cfg.hyper, cfg.family, m)?;
    let mut lam = init.to_vec();
    let mut hist = IterateHistory::new(lam.clone(), step_offset);
    let check_every = cfg.check_every.unwrap_or((cfg.w_min / 2).max(1));
    let mut deltas: Vec<f64> = Vec::new();
    let mut stationary: Option<Stationary> = None;
    let mut trace = Vec::new();
    let mut checks = Vec::new();
    let mut final_gate = None;
    let mut opt_time = Duration::ZERO;
    let op_cost_per_iter = grad_src.cost_hint() + 4.0 * m as f64;

    let finish = |hist: &IterateHistory,
                  k: usize,
                  window: usize,
                  success: bool,
                  k_conv: Option<usize>,
                  trace: Vec<DiagnosticsReport>,
                  checks: Vec<CheckRecord>,
                  final_gate: Option<GateOutcome>,
                  sched: Option<&RecheckSchedule>,
                  failure: Option<FasoFailure>| {
        let window = window.min(hist.len());
        let iterate_average = if window == 0 {
            hist.origin().to_vec()
        } else {
            hist.window_mean(window)
        };
        FasoResult {
            iterations_used: k,
            iterate_average,
            success,
            k_conv,
            final_window: window,
            diagnostics_trace: trace,
            checks,
            final_gate,
            cost_ratio: sched.map(|s| s.r),
            chi: sched.map(|s| s.chi),
            failure,
        }
    };

    for k in 1..=cfg.k_max {
        let global = step_offset + k as u64;
        let t0 = Instant::now();
        let dir = grad_src
            .estimate(&lam, rng)
            .and_then(|est| opt.descent_direction(&est.grad, &lam));
        let dir = match dir {
            Ok(d) => d,
            Err(e) if is_numeric_failure(&e) => {
                let st = stationary.as_ref();
                let window = st.map_or(cfg.w_min, |s| s.w_check);
                return Ok(finish(
                    &hist,
                    k - 1,
                    window,
                    false,
                    st.map(|s| s.k_conv),
                    trace,
                    checks,
                    final_gate,
                    st.and_then(|s| s.schedule.as_ref()),
                    Some(FasoFailure {
                        step: global,
                        message: e.to_string(),
                    }),
                ));
            }
            Err(e) => return Err(e),
        };
        if matches!(cfg.detector, Detector::SasaPlus(_)) && stationary.is_none() {
            deltas.push(invariant_statistic(&lam, &dir, cfg.gamma));
        }
        step(&mut lam, &dir, cfg.gamma)?;
        hist.push(&lam)?;
        opt_time += t0.elapsed();

        if stationary.is_none() {
            let detected = match cfg.detector {
                Detector::Rhat => {
                    if k % check_every == 0 && max_window(k) >= cfg.w_min {
                        let s = rhat_max_window_search(&hist, cfg.w_min)?;
                        checks.push(CheckRecord {
                            step: global,
                            phase: CheckPhase::Stationarity,
                            rhat_max: Some(s.rhat_max),
                            w_opt: Some(s.w_opt),
                            mean_mcse: None,
                            ess_min: None,
                            passed: s.converged,
                        });
                        s.converged.then_some(s.w_opt)
                    } else {
                        None
                    }
                }
                Detector::SasaPlus(sc) => {
                    if k % check_every == 0 && max_window(k) >= cfg.w_min {
                        let w = sasa_plus_window(&deltas, &sc);
                        checks.push(CheckRecord {
                            step: global,
                            phase: CheckPhase::Stationarity,
                            rhat_max: None,
                            w_opt: w,
                            mean_mcse: None,
                            ess_min: None,
                            passed: w.is_some(),
                        });
                        w.map(|w| w.clamp(cfg.w_min, max_window(k)))
                    } else {
                        None
                    }
                }
                Detector::Distance(dc) => {
                    if is_distance_checkpoint(k, dc.q) && max_window(k) >= cfg.w_min {
                        let ok = distance_based_converged(&hist, &dc);
                        let w = (k - (k as f64 / dc.q).round() as usize)
                            .clamp(cfg.w_min, max_window(k));
                        checks.push(CheckRecord {
                            step: global,
                            phase: CheckPhase::Stationarity,
                            rhat_max: None,
                            w_opt: Some(w),
                            mean_mcse: None,
                            ess_min: None,
                            passed: ok,
                        });
                        ok.then_some(w)
                    } else {
                        None
                    }
                }
            };
            if let Some(w) = detected {
                stationary = Some(Stationary {
                    k_conv: k - w,
                    schedule: None,
                    w_check: w,
                    w_conv: w,
                });
            }
        }

        if let Some(st) = stationary.as_mut() {
            if k - st.k_conv == st.w_check {
                let window = st.w_check.min(max_window(k)).max(1);
                let t1 = Instant::now();
                let (gate, report) = mcse_gate(&hist, window, cfg.family, cfg.epsilon)?;
                let check_time = t1.elapsed();
                checks.push(CheckRecord {
                    step: global,
                    phase: CheckPhase::Mcse,
                    rhat_max: Some(report.rhat_max()),
                    w_opt: Some(window),
                    mean_mcse: Some(gate.mean_relative_mcse),
                    ess_min: Some(gate.ess_min),
                    passed: gate.pass,
                });
                if st.schedule.is_none() {
                    let r = match cfg.cost_ratio {
                        CostRatio::Fixed(r) => r,
                        CostRatio::OpCount => {
                            let ce = report.work as f64 / window as f64;
                            if ce > 0.0 { op_cost_per_iter / ce } else { MAX_COST_RATIO }
                        }
                        CostRatio::WallClock => {
                            let co = opt_time.as_secs_f64() / k as f64;
                            let ce = check_time.as_secs_f64() / window as f64;
                            if ce > 0.0 { co / ce } else { MAX_COST_RATIO }
                        }
                    };
                    st.schedule = Some(RecheckSchedule::new(r, st.w_conv));
                }
                trace.push(report);
                final_gate = Some(gate);
                if gate.pass {
                    return Ok(finish(
                        &hist,
                        k,
                        window,
                        true,
                        Some(st.k_conv),
                        trace,
                        checks,
                        final_gate,
                        st.schedule.as_ref(),
                        None,
                    ));
                }
                st.w_check = st.schedule.as_mut().expect("schedule set above").advance();
            }
        }
    }

    let st = stationary.as_ref();
    let window = st.map_or(cfg.w_min, |s| s.w_check);
    Ok(finish(
        &hist,
        cfg.k_max,
        window,
        false,
        st.map(|s| s.k_conv),
        trace,
        checks,
        final_gate,
        st.and_then(|s| s.schedule.as_ref()),
        None,
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineConfig {
    pub gamma: f64,
    pub optimizer: OptimizerKind,
    pub hyper: OptimizerHyper,
    pub family: FamilyKind,
    pub k_max: usize,
    pub eval_every: usize,
    /// Fraction of the iterates so far used for the trailing average.
    pub window_fraction: f64,
}

impl BaselineConfig {
    pub fn new(gamma: f64, optimizer: OptimizerKind, family: FamilyKind, k_max: usize) -> Self {
        Self {
            gamma,
            optimizer,
            hyper: OptimizerHyper::default(),
            family,
            k_max,
            eval_every: 200,
            window_fraction: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselinePoint {
    pub step: usize,
    pub window: usize,
    pub average: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineResult {
    pub points: Vec<BaselinePoint>,
    pub final_iterate: Vec<f64>,
    pub failure: Option<FasoFailure>,
}

/// Plain fixed learning-rate optimization reporting the trailing-window
/// iterate average every `eval_every` steps and at the last step.
pub fn run_fixed_lr_baseline<G, R>(
    grad_src: &mut G,
    init: &[f64],
    cfg: &BaselineConfig,
    rng: &mut R,
) -> Result<BaselineResult>
where
    G: StochasticGradient,
    R: Rng + ?Sized,
{
    let m = grad_src.num_params();
    if init.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: init.len(),
        });
    }
    if cfg.eval_every == 0 || !(cfg.window_fraction > 0.0 && cfg.window_fraction <= 1.0) {
        return Err(Error::InvalidArgument(
            "eval_every must be positive and window_fraction in (0, 1]".into(),
        ));
    }
    let mut opt = Optimizer::new(cfg.optimizer, cfg.hyper, cfg.family, m)?;
    let mut lam = init.to_vec();
    // prefix[k] holds the sum of the first k iterates.
    let mut prefix: Vec<Vec<f64>> = vec![vec![0.0; m]];
    let mut points = Vec::new();
    let mut failure = None;
    for k in 1..=cfg.k_max {
        let dir = grad_src
            .estimate(&lam, rng)
            .and_then(|est| opt.descent_direction(&est.grad, &lam));
        let dir = match dir {
            Ok(d) => d,
            Err(e) if is_numeric_failure(&e) => {
                failure = Some(FasoFailure {
                    step: k as u64,
                    message: e.to_string(),
                });
                break;
            }
            Err(e) => return Err(e),
        };
        step(&mut lam, &dir, cfg.gamma)?;
        let next: Vec<f64> = prefix[k - 1].iter().zip(&lam).map(|(s, l)| s + l).collect();
        prefix.push(next);
        if k % cfg.eval_every == 0 || k == cfg.k_max {
            let w = ((cfg.window_fraction * k as f64).ceil() as usize).clamp(1, k);
            let average = prefix[k]
                .iter()
                .zip(&prefix[k - w])
                .map(|(a, b)| (a - b) / w as f64)
                .collect();
            points.push(BaselinePoint {
                step: k,
                window: w,
                average,
            });
        }
    }
    Ok(BaselineResult {
        points,
        final_iterate: lam,
        failure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradient::GradientEstimate;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Gradient of `0.5 * |lambda|^2` plus optional Gaussian noise.
    struct Quadratic {
        m: usize,
        noise: f64,
    }

    impl StochasticGradient for Quadratic {
        fn num_params(&self) -> usize {
            self.m
        }

        fn estimate<R: Rng + ?Sized>(&mut self, p: &[f64], rng: &mut R) -> Result<GradientEstimate> {
            let grad = p
                .iter()
                .map(|x| {
                    let z: f64 = StandardNormal.sample(rng);
                    x + self.noise * z
                })
                .collect();
            Ok(GradientEstimate {
                grad,
                per_sample_logp_mean: 0.0,
            })
        }
    }

    #[test]
    fn chi_examples() {
        assert_eq!(chi_of_r(0.0), 2.0);
        assert_relative_eq!(chi_of_r(3.0), 1.5);
        assert!(chi_of_r(1e14) < 1.000_001);
        assert!(chi_of_r(1.0) > chi_of_r(2.0));
        assert_eq!(g_of_r(0.0), 4.0);
    }

    #[test]
    fn schedule_windows_strictly_increase() {
        let mut s = RecheckSchedule::new(1e3, 10);
        let mut prev = s.next_window;
        for _ in 0..50 {
            let w = s.advance();
            assert!(w > prev);
            prev = w;
        }
        let mut s = RecheckSchedule::new(0.0, 100);
        assert_eq!(s.advance(), 200);
        assert_eq!(s.advance(), 400);
    }

    fn report(mcse: Vec<f64>, ess: Vec<f64>) -> DiagnosticsReport {
        DiagnosticsReport {
            rhat: vec![1.0; mcse.len()],
            ess,
            mcse,
            window: 100,
            work: 0,
        }
    }

    #[test]
    fn gate_scales_tau_mcse_by_sigma() {
        let r = report(vec![0.5, 0.01], vec![500.0, 500.0]);
        let mean = [0.0, 10f64.ln()];
        let g = gate_from_report(&r, &mean, FamilyKind::MeanField, 0.1);
        assert!(g.pass);
        assert_relative_eq!(g.mean_relative_mcse, 0.05, max_relative = 1e-12);
        let unscaled = gate_from_report(&r, &[0.0, 0.0], FamilyKind::MeanField, 0.1);
        assert!(!unscaled.pass);
    }

    #[test]
    fn gate_fails_on_ess_floor_not_mcse() {
        let r = report(vec![1e-6, 1e-6], vec![49.0, 400.0]);
        let g = gate_from_report(&r, &[0.0, 0.0], FamilyKind::MeanField, 0.1);
        assert!(!g.pass);
        assert!(g.mean_relative_mcse < 0.1);
        assert_eq!(g.ess_min, 49.0);
    }

    #[test]
    fn gate_full_rank_uses_plain_mean() {
        let r = report(vec![0.1, 0.2, 0.3], vec![100.0; 3]);
        let g = gate_from_report(&r, &[0.0; 3], FamilyKind::FullRank, 0.25);
        assert_relative_eq!(g.mean_relative_mcse, 0.2, max_relative = 1e-12);
        assert!(g.pass);
    }

    #[test]
    fn deterministic_contraction_converges_to_optimum() {
        let mut q = Quadratic { m: 1, noise: 0.0 };
        let mut cfg = FasoConfig::new(0.5, FamilyKind::FullRank);
        cfg.optimizer = OptimizerKind::Sgd;
        cfg.k_max = 5000;
        let res = run_faso(&mut q, &[3.0], &cfg, &mut ChaCha8Rng::seed_from_u64(0), 0).unwrap();
        assert!(res.success, "{:?}", res.checks);
        assert!(res.iterate_average[0].abs() < 1e-6);
    }

    #[test]
    fn iterate_average_is_mean_of_last_window() {
        let mut q = Quadratic { m: 2, noise: 1.0 };
        let mut cfg = FasoConfig::new(0.1, FamilyKind::MeanField);
        cfg.optimizer = OptimizerKind::Sgd;
        cfg.k_max = 20_000;
        cfg.epsilon = 0.05;
        let res = run_faso(&mut q, &[1.0, 1.0], &cfg, &mut ChaCha8Rng::seed_from_u64(4), 0).unwrap();
        assert!(res.success);

        // Replay the chain and average the final window directly.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut lam = vec![1.0, 1.0];
        let mut rows = Vec::new();
        for _ in 0..res.iterations_used {
            let g = q.estimate(&lam, &mut rng).unwrap().grad;
            step(&mut lam, &g, 0.1).unwrap();
            rows.push(lam.clone());
        }
        let w = res.final_window;
        for i in 0..2 {
            let direct: f64 =
                rows[rows.len() - w..].iter().map(|r| r[i]).sum::<f64>() / w as f64;
            assert_eq!(direct, res.iterate_average[i]);
        }
        let last = res.checks.last().unwrap();
        assert!(last.passed && last.phase == CheckPhase::Mcse);
    }

    #[test]
    fn k_max_equal_to_w_min_fails() {
        let mut q = Quadratic { m: 2, noise: 1.0 };
        let mut cfg = FasoConfig::new(0.1, FamilyKind::MeanField);
        cfg.k_max = cfg.w_min;
        let res = run_faso(&mut q, &[0.0, 0.0], &cfg, &mut ChaCha8Rng::seed_from_u64(1), 0).unwrap();
        assert!(!res.success);
        assert_eq!(res.iterations_used, cfg.w_min);
        assert_eq!(res.iterate_average.len(), 2);
    }

    #[test]
    fn alternative_detectors_run() {
        for det in [
            Detector::SasaPlus(SasaPlusConfig::default()),
            Detector::Distance(DistanceConfig::default()),
        ] {
            let mut q = Quadratic { m: 2, noise: 1.0 };
            let mut cfg = FasoConfig::new(0.1, FamilyKind::MeanField);
            cfg.detector = det;
            cfg.optimizer = OptimizerKind::Sgd;
            cfg.k_max = 50_000;
            let res =
                run_faso(&mut q, &[2.0, 2.0], &cfg, &mut ChaCha8Rng::seed_from_u64(2), 0).unwrap();
            assert!(res.success, "{} failed", det.name());
        }
    }

    #[test]
    fn baseline_reports_trailing_window() {
        let mut q = Quadratic { m: 1, noise: 0.0 };
        let cfg = BaselineConfig::new(0.5, OptimizerKind::Sgd, FamilyKind::FullRank, 450);
        let res =
            run_fixed_lr_baseline(&mut q, &[1.0], &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let steps: Vec<usize> = res.points.iter().map(|p| p.step).collect();
        assert_eq!(steps, vec![200, 400, 450]);
        assert_eq!(res.points[0].window, 40);
        assert_eq!(res.points[2].window, 90);
    }

    #[test]
    fn relative_errors_by_hand() {
        let (s, t) = mean_field_relative_errors(&[0.2, 2f64.ln()], &[0.0, 0.0]);
        assert_relative_eq!(s, 1.0);
        assert_relative_eq!(t, 0.2);
    }
}
