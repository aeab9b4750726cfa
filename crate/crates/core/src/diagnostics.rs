//! Fixed learning-rate iterates treated as a Markov chain: effective sample
//! size, Monte Carlo standard error, split-R-hat and the stationarity
//! detectors built on them.

use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::error::{Error, Result};

/// Target R-hat for declaring stationarity.
pub const RHAT_THRESHOLD: f64 = 1.1;

/// Largest fraction of the available iterates any window may cover.
pub const MAX_WINDOW_FRACTION: f64 = 0.95;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticError {
    #[error("series too short: need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("series has zero variance")]
    Degenerate,

    #[error("not yet checkable: need {needed} iterates, have {have}")]
    NotYetCheckable { needed: usize, have: usize },
}

/// Iterates of one learning-rate epoch, stored per coordinate.
#[derive(Clone, Debug)]
pub struct IterateHistory {
    epoch_start_step: u64,
    origin: Vec<f64>,
    columns: Vec<Vec<f64>>,
}

impl IterateHistory {
    /// `origin` is the iterate the epoch starts from; it is not part of the
    /// chain but anchors the distance detector.
    pub fn new(origin: Vec<f64>, epoch_start_step: u64) -> Self {
        let columns = vec![Vec::new(); origin.len()];
        Self {
            epoch_start_step,
            origin,
            columns,
        }
    }

    pub fn push(&mut self, iterate: &[f64]) -> Result<()> {
        if iterate.len() != self.columns.len() {
            return Err(Error::DimensionMismatch {
                expected: self.columns.len(),
                actual: iterate.len(),
            });
        }
        for (c, v) in self.columns.iter_mut().zip(iterate) {
            c.push(*v);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_params(&self) -> usize {
        self.columns.len()
    }

    pub fn epoch_start_step(&self) -> u64 {
        self.epoch_start_step
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.columns[i]
    }

    /// The last `w` values of coordinate `i`.
    pub fn tail(&self, i: usize, w: usize) -> &[f64] {
        let c = &self.columns[i];
        &c[c.len() - w.min(c.len())..]
    }

    /// Iterate number `k` (1-based: the iterate after `k` steps).
    pub fn iterate(&self, k: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[k - 1]).collect()
    }

    pub fn last(&self) -> Option<Vec<f64>> {
        if self.is_empty() {
            None
        } else {
            Some(self.iterate(self.len()))
        }
    }

    /// Arithmetic mean of the last `w` iterates.
    pub fn window_mean(&self, w: usize) -> Vec<f64> {
        self.columns
            .iter()
            .map(|c| {
                let t = &c[c.len() - w.min(c.len())..];
                t.iter().sum::<f64>() / t.len() as f64
            })
            .collect()
    }
}

/// Per-coordinate statistics over the trailing window of a history.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsReport {
    pub rhat: Vec<f64>,
    pub ess: Vec<f64>,
    pub mcse: Vec<f64>,
    pub window: usize,
    /// Multiply-adds spent, used as a deterministic cost measure.
    pub work: u64,
}

impl DiagnosticsReport {
    pub fn compute(history: &IterateHistory, window: usize) -> Result<Self> {
        let have = history.len();
        if window > have {
            return Err(DiagnosticError::NotYetCheckable {
                needed: window,
                have,
            }
            .into());
        }
        let m = history.num_params();
        let mut report = DiagnosticsReport {
            rhat: Vec::with_capacity(m),
            ess: Vec::with_capacity(m),
            mcse: Vec::with_capacity(m),
            window,
            work: 0,
        };
        for i in 0..m {
            let x = history.tail(i, window);
            report.rhat.push(split_rhat(x)?);
            match ess_detailed(x, 1.0) {
                Ok(e) => {
                    report.work += e.work;
                    report.ess.push(e.ess);
                    report.mcse.push(sample_sd(x) / e.ess.sqrt());
                }
                Err(DiagnosticError::Degenerate) => {
                    report.ess.push(window as f64);
                    report.mcse.push(0.0);
                }
                Err(e) => return Err(e.into()),
            }
            report.work += 3 * window as u64;
        }
        Ok(report)
    }

    pub fn rhat_max(&self) -> f64 {
        self.rhat.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn ess_min(&self) -> f64 {
        self.ess.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
fn sample_var(x: &[f64]) -> f64 {
    let mu = mean(x);
    x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn sample_sd(x: &[f64]) -> f64 {
    sample_var(x).sqrt()
}

fn is_constant(x: &[f64]) -> bool {
    x.iter().all(|v| *v == x[0])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EssDetail {
    pub ess: f64,
    /// Largest autocorrelation lag evaluated.
    pub max_lag: usize,
    pub work: u64,
}

pub const MIN_ESS_LEN: usize = 8;

/// ESS with Geyer initial-positive-sequence truncation, capped to
/// `[1, cap_ratio * K]`.
pub fn ess_detailed(x: &[f64], cap_ratio: f64) -> Result<EssDetail, DiagnosticError> {
    let k = x.len();
    if k < MIN_ESS_LEN {
        return Err(DiagnosticError::TooShort {
            needed: MIN_ESS_LEN,
            got: k,
        });
    }
    if is_constant(x) {
        return Err(DiagnosticError::Degenerate);
    }
    let mu = mean(x);
    let centered: Vec<f64> = x.iter().map(|v| v - mu).collect();
    let mut work = k as u64;
    let mut autocov = |lag: usize| -> f64 {
        work += (k - lag) as u64;
        centered[..k - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / k as f64
    };
    let c0 = autocov(0);
    if c0 <= 0.0 {
        return Err(DiagnosticError::Degenerate);
    }
    let max_lag = k / 2;
    let mut pair_sum_total = 0.0;
    let mut t = 0;
    let mut last_lag = 0;
    while t < max_lag {
        let r_even = if t == 0 { 1.0 } else { autocov(t) / c0 };
        let r_odd = autocov(t + 1) / c0;
        last_lag = t + 1;
        let p = r_even + r_odd;
        if p < 0.0 {
            break;
        }
        pair_sum_total += p;
        t += 2;
    }
    let tau = (2.0 * pair_sum_total - 1.0).max(1.0 / (cap_ratio * k as f64));
    let ess = (k as f64 / tau).clamp(1.0, cap_ratio * k as f64);
    Ok(EssDetail {
        ess,
        max_lag: last_lag,
        work,
    })
}

pub fn ess(x: &[f64]) -> Result<f64, DiagnosticError> {
    ess_detailed(x, 1.0).map(|e| e.ess)
}

/// `sd / sqrt(ess)` with the unbiased sample sd.
pub fn mcse(x: &[f64]) -> Result<f64, DiagnosticError> {
    let e = ess(x)?;
    Ok(sample_sd(x) / e.sqrt())
}

/// Split-R-hat over one or more chains of equal length. Each chain is cut
/// into two halves of `n = floor(K/2)` values; an odd trailing value is dropped.
pub fn split_rhat_chains(chains: &[&[f64]]) -> Result<f64, DiagnosticError> {
    let k = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if k < 4 {
        return Err(DiagnosticError::TooShort { needed: 4, got: k });
    }
    let n = k / 2;
    let mut means = Vec::with_capacity(2 * chains.len());
    let mut vars = Vec::with_capacity(2 * chains.len());
    for c in chains {
        for half in [&c[..n], &c[n..2 * n]] {
            means.push(mean(half));
            vars.push(sample_var(half));
        }
    }
    let w = mean(&vars);
    let nf = n as f64;
    let b = nf * sample_var(&means);
    if w <= 0.0 || !w.is_finite() {
        // Every half is constant: stationary iff they agree.
        return Ok(if b == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let v_plus = (nf - 1.0) / nf * w + b / nf;
    Ok((v_plus / w).sqrt())
}

pub fn split_rhat(x: &[f64]) -> Result<f64, DiagnosticError> {
    split_rhat_chains(&[x])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowSearch {
    pub w_opt: usize,
    pub rhat_max: f64,
    pub converged: bool,
    pub work: u64,
}

/// `n` equally spaced integers covering `[lo, hi]`, both ends included.
pub fn window_grid(lo: usize, hi: usize, n: usize) -> Vec<usize> {
    let mut g: Vec<usize> = (0..n)
        .map(|j| lo + ((hi - lo) as f64 * j as f64 / (n - 1) as f64).round() as usize)
        .collect();
    g.dedup();
    g
}

pub fn max_window(k: usize) -> usize {
    (MAX_WINDOW_FRACTION * k as f64).floor() as usize
}

/// Smallest-R-hat window among 5 equally spaced sizes in
/// `[w_min, floor(0.95 k)]`.
pub fn rhat_max_window_search(history: &IterateHistory, w_min: usize) -> Result<WindowSearch> {
    let k = history.len();
    let hi = max_window(k);
    if w_min < 4 {
        return Err(Error::InvalidArgument("w_min must be at least 4".into()));
    }
    if hi < w_min {
        return Err(DiagnosticError::NotYetCheckable {
            needed: (w_min as f64 / MAX_WINDOW_FRACTION).ceil() as usize,
            have: k,
        }
        .into());
    }
    let mut best: Option<(usize, f64)> = None;
    let mut work = 0u64;
    // Larger windows first so ties keep more iterates.
    for w in window_grid(w_min, hi, 5).into_iter().rev() {
        let mut rmax = f64::NEG_INFINITY;
        for i in 0..history.num_params() {
            rmax = rmax.max(split_rhat(history.tail(i, w))?);
        }
        work += 3 * (w * history.num_params()) as u64;
        if best.is_none_or(|(_, r)| rmax < r) {
            best = Some((w, rmax));
        }
    }
    let (w_opt, rhat_max) = best.expect("grid is non-empty");
    Ok(WindowSearch {
        w_opt,
        rhat_max,
        converged: rhat_max <= RHAT_THRESHOLD,
        work,
    })
}

/// SASA+ invariant `2 <d, lambda> - gamma |d|^2` at the pre-step iterate.
pub fn invariant_statistic(lambda: &[f64], direction: &[f64], gamma: f64) -> f64 {
    let dot: f64 = lambda.iter().zip(direction).map(|(l, d)| l * d).sum();
    let sq: f64 = direction.iter().map(|d| d * d).sum();
    2.0 * dot - gamma * sq
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SasaPlusConfig {
    pub alpha: f64,
    pub n_min: usize,
}

impl Default for SasaPlusConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            n_min: 100,
        }
    }
}

/// True iff a z-test of zero mean for the invariant series fails to reject
/// on the ESS-maximizing trailing window.
pub fn sasa_plus_converged(deltas: &[f64], cfg: &SasaPlusConfig) -> bool {
    sasa_plus_window(deltas, cfg).is_some()
}

/// The window on which [`sasa_plus_converged`] accepts, if it does.
pub fn sasa_plus_window(deltas: &[f64], cfg: &SasaPlusConfig) -> Option<usize> {
    let k = deltas.len();
    let lo = cfg.n_min.max(MIN_ESS_LEN);
    let hi = max_window(k);
    if hi < lo {
        return None;
    }
    let mut best: Option<(usize, f64)> = None;
    for w in window_grid(lo, hi, 5) {
        let tail = &deltas[k - w..];
        let e = match ess(tail) {
            Ok(e) => e,
            Err(DiagnosticError::Degenerate) => w as f64,
            Err(_) => continue,
        };
        if best.is_none_or(|(_, b)| e > b) {
            best = Some((w, e));
        }
    }
    let (w, e) = best?;
    if e < cfg.n_min as f64 {
        return None;
    }
    let tail = &deltas[k - w..];
    let mu = mean(tail);
    let se = sample_sd(tail) / e.sqrt();
    let accept = if se == 0.0 {
        mu == 0.0
    } else {
        let z_crit = Normal::standard().inverse_cdf(1.0 - cfg.alpha / 2.0);
        (mu / se).abs() <= z_crit
    };
    accept.then_some(w)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistanceConfig {
    pub q: f64,
    pub thresh: f64,
    /// Floor on squared distances.
    pub eps: f64,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        Self {
            q: 2.0,
            thresh: 0.5,
            eps: 1e-8,
        }
    }
}

/// Whether `k` is one of the checkpoints `ceil(q^n)`, `n >= 1`.
pub fn is_distance_checkpoint(k: usize, q: f64) -> bool {
    let mut n = 1;
    loop {
        let c = q.powi(n).ceil() as usize;
        if c == k {
            return true;
        }
        if c > k {
            return false;
        }
        n += 1;
    }
}

fn sq_distance(history: &IterateHistory, k: usize, eps: f64) -> f64 {
    let d: f64 = history
        .columns
        .iter()
        .zip(&history.origin)
        .map(|(c, o)| (c[k - 1] - o) * (c[k - 1] - o))
        .sum();
    d.max(eps)
}

/// Log-log slope of the squared distance from the epoch origin between
/// iterates `k/q` and `k`.
pub fn distance_slope(history: &IterateHistory, k: usize, q: f64, eps: f64) -> Option<f64> {
    let prev = (k as f64 / q).round() as usize;
    if prev < 1 || prev >= k || k > history.len() {
        return None;
    }
    let num = sq_distance(history, k, eps).ln() - sq_distance(history, prev, eps).ln();
    Some(num / ((k as f64).ln() - (prev as f64).ln()))
}

/// Distance-based detector evaluated at the latest iterate; false unless
/// that iterate is a checkpoint.
pub fn distance_based_converged(history: &IterateHistory, cfg: &DistanceConfig) -> bool {
    let k = history.len();
    if !is_distance_checkpoint(k, cfg.q) {
        return false;
    }
    distance_slope(history, k, cfg.q, cfg.eps).is_some_and(|s| s < cfg.thresh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn iid(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn ar1(n: usize, phi: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = 0.0;
        let s = (1.0 - phi * phi).sqrt();
        (0..n)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                x = phi * x + s * e;
                x
            })
            .collect()
    }

    #[test]
    fn ess_of_iid_is_near_k() {
        for seed in 0..20 {
            let e = ess(&iid(10_000, seed)).unwrap();
            assert!((8000.0..=12_500.0).contains(&e), "seed {seed}: {e}");
        }
    }

    #[test]
    fn mcse_of_iid() {
        let m = mcse(&iid(10_000, 4)).unwrap();
        assert!((0.007..=0.014).contains(&m), "{m}");
    }

    #[test]
    fn ess_of_ar1_matches_integrated_autocorrelation() {
        let e = ess(&ar1(50_000, 0.9, 1)).unwrap();
        let r = e / (50_000.0 / 19.0);
        assert!((0.7..=1.4).contains(&r), "ratio {r}");
    }

    #[test]
    fn constant_series_is_degenerate() {
        let x = vec![2.5; 50];
        assert_eq!(ess(&x), Err(DiagnosticError::Degenerate));
        assert_eq!(mcse(&x), Err(DiagnosticError::Degenerate));
        assert_eq!(split_rhat(&x), Ok(1.0));
    }

    #[test]
    fn short_series_rejected() {
        assert!(matches!(ess(&[1.0, 2.0]), Err(DiagnosticError::TooShort { .. })));
        assert!(matches!(split_rhat(&[1.0, 2.0, 3.0]), Err(DiagnosticError::TooShort { .. })));
    }

    #[test]
    fn split_rhat_constant_halves_with_different_means() {
        let mut x = vec![0.0; 10];
        x.extend(vec![1.0; 10]);
        assert_eq!(split_rhat(&x), Ok(f64::INFINITY));
    }

    #[test]
    fn split_rhat_hand_computed() {
        // halves (0, 2) and (4, 6): W = 2, B = 2 * 8 = 16, v+ = W/2 + B/2 = 9.
        let r = split_rhat(&[0.0, 2.0, 4.0, 6.0]).unwrap();
        assert_relative_eq!(r, (9.0f64 / 2.0).sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn split_rhat_drops_trailing_odd_value() {
        let a = split_rhat(&[0.0, 2.0, 4.0, 6.0, 100.0]).unwrap();
        let b = split_rhat(&[0.0, 2.0, 4.0, 6.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_rhat_separates_shifted_halves() {
        let mut ok = 0;
        for seed in 0..100 {
            let x = iid(1000, seed);
            if split_rhat(&x).unwrap() < 1.05 {
                ok += 1;
            }
            let mut y = iid(1000, 1000 + seed);
            y[500..].iter_mut().for_each(|v| *v += 3.0);
            assert!(split_rhat(&y).unwrap() > 1.5);
        }
        assert!(ok >= 95, "{ok}");
    }

    fn history_from_rows(rows: &[Vec<f64>]) -> IterateHistory {
        let mut h = IterateHistory::new(vec![0.0; rows[0].len()], 0);
        for r in rows {
            h.push(r).unwrap();
        }
        h
    }

    #[test]
    fn window_search_on_stationary_chain() {
        let cols: Vec<Vec<f64>> = (0..3).map(|i| iid(2000, 50 + i)).collect();
        let rows: Vec<Vec<f64>> = (0..2000).map(|k| cols.iter().map(|c| c[k]).collect()).collect();
        let s = rhat_max_window_search(&history_from_rows(&rows), 200).unwrap();
        assert!(s.converged, "{s:?}");
    }

    #[test]
    fn window_search_excludes_drift() {
        let noise = iid(2000, 9);
        let rows: Vec<Vec<f64>> = (0..2000)
            .map(|k| {
                let drift = if k < 1000 { 20.0 * (1.0 - k as f64 / 1000.0) } else { 0.0 };
                vec![drift + noise[k]]
            })
            .collect();
        let s = rhat_max_window_search(&history_from_rows(&rows), 200).unwrap();
        assert!(s.converged, "{s:?}");
        assert!(s.w_opt as f64 <= 0.55 * 2000.0, "{s:?}");
    }

    #[test]
    fn window_search_not_yet_checkable() {
        let rows: Vec<Vec<f64>> = (0..200).map(|k| vec![k as f64]).collect();
        let err = rhat_max_window_search(&history_from_rows(&rows), 200).unwrap_err();
        assert!(matches!(
            err,
            Error::Diagnostic(DiagnosticError::NotYetCheckable { .. })
        ));
    }

    #[test]
    fn window_grid_includes_endpoints() {
        assert_eq!(window_grid(200, 1900, 5), vec![200, 625, 1050, 1475, 1900]);
        assert_eq!(window_grid(10, 10, 5), vec![10]);
    }

    #[test]
    fn report_handles_degenerate_coordinates() {
        let rows: Vec<Vec<f64>> = (0..100).map(|k| vec![1.0, (k % 7) as f64]).collect();
        let r = DiagnosticsReport::compute(&history_from_rows(&rows), 60).unwrap();
        assert_eq!(r.ess[0], 60.0);
        assert_eq!(r.mcse[0], 0.0);
        assert_eq!(r.rhat[0], 1.0);
        assert!(r.work > 0);
    }

    #[test]
    fn sasa_plus_examples() {
        let cfg = SasaPlusConfig::default();
        let mut accepted = 0;
        for seed in 0..40 {
            if sasa_plus_converged(&iid(2000, seed), &cfg) {
                accepted += 1;
            }
            let shifted: Vec<f64> = iid(2000, 100 + seed).iter().map(|v| v + 5.0).collect();
            assert!(!sasa_plus_converged(&shifted, &cfg));
        }
        assert!(accepted >= 34, "{accepted}");
        assert!(!sasa_plus_converged(&iid(50, 0), &cfg));
    }

    #[test]
    fn invariant_statistic_by_hand() {
        assert_relative_eq!(invariant_statistic(&[1.0, 2.0], &[3.0, -1.0], 0.5), 2.0 - 5.0);
    }

    #[test]
    fn distance_detector_slopes() {
        // Linear drift: squared distance grows like k^2.
        let rows: Vec<Vec<f64>> = (1..=1024).map(|k| vec![0.01 * k as f64]).collect();
        let h = history_from_rows(&rows);
        assert_relative_eq!(distance_slope(&h, 1024, 2.0, 1e-8).unwrap(), 2.0, max_relative = 1e-12);
        assert!(!distance_based_converged(&h, &DistanceConfig::default()));

        // Stationary oscillation around a fixed offset: slope near zero.
        let rows: Vec<Vec<f64>> = (1..=1024).map(|k| vec![5.0 + 0.1 * (k as f64).sin()]).collect();
        let h = history_from_rows(&rows);
        assert!(distance_based_converged(&h, &DistanceConfig::default()));

        // Pure random walk in many coordinates: squared distance grows like k.
        let m = 200;
        let steps = iid(1024 * m, 77);
        let mut x = vec![0.0; m];
        let rows: Vec<Vec<f64>> = steps
            .chunks(m)
            .map(|e| {
                x.iter_mut().zip(e).for_each(|(xi, ei)| *xi += ei);
                x.clone()
            })
            .collect();
        let s = distance_slope(&history_from_rows(&rows), 1024, 2.0, 1e-8).unwrap();
        assert!((0.8..=1.2).contains(&s), "{s}");
    }

    #[test]
    fn checkpoints() {
        assert!(is_distance_checkpoint(2, 2.0));
        assert!(is_distance_checkpoint(1024, 2.0));
        assert!(!is_distance_checkpoint(1000, 2.0));
        assert!(is_distance_checkpoint(4, 1.5)); // ceil(1.5^3) = 4
    }

    #[test]
    fn distance_uses_floor_when_iterate_equals_origin() {
        let rows = vec![vec![0.0]; 8];
        let s = distance_slope(&history_from_rows(&rows), 8, 2.0, 1e-8).unwrap();
        assert_eq!(s, 0.0);
    }

    proptest! {
        #[test]
        fn ess_bounded_and_mcse_consistent(
            x in prop::collection::vec(-100.0f64..100.0, 8..300)
        ) {
            if let Ok(e) = ess(&x) {
                prop_assert!(e >= 1.0 && e <= x.len() as f64);
                let m = mcse(&x).unwrap();
                let sd = sample_sd(&x);
                prop_assert!((m * e.sqrt() - sd).abs() <= 1e-12 * sd.max(1e-300));
            }
        }

        #[test]
        fn split_rhat_affine_invariant(
            x in prop::collection::vec(-10.0f64..10.0, 4..200),
            a in prop_oneof![-50.0f64..-0.1, 0.1f64..50.0],
            b in -100.0f64..100.0,
        ) {
            let r = split_rhat(&x).unwrap();
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let s = split_rhat(&y).unwrap();
            if r.is_finite() && r > 0.0 {
                prop_assert!((r - s).abs() <= 1e-10 * r);
            }
        }
    }
}
