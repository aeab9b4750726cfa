//! Adaptive random-walk Metropolis for small unconstrained posteriors.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RwmConfig {
    pub chains: usize,
    /// Iterations per chain, including warmup.
    pub iterations: usize,
    pub warmup: usize,
    pub target_accept: f64,
}

impl Default for RwmConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            iterations: 5000,
            warmup: 2500,
            target_accept: 0.25,
        }
    }
}

/// Post-warmup draws of one chain and its acceptance rate.
#[derive(Clone, Debug)]
pub struct ChainOutput {
    pub draws: Vec<Vec<f64>>,
    pub accept_rate: f64,
}

fn sample_cov(draws: &[Vec<f64>]) -> DMatrix<f64> {
    let n = draws.len() as f64;
    let p = draws[0].len();
    let mut mean = DVector::zeros(p);
    for d in draws {
        mean += DVector::from_column_slice(d);
    }
    mean /= n;
    let mut cov = DMatrix::zeros(p, p);
    for d in draws {
        let c = DVector::from_column_slice(d) - &mean;
        cov += &c * c.transpose();
    }
    cov / (n - 1.0)
}

/// Run one chain. The proposal covariance is re-estimated from the draws of
/// each doubling warmup window and a global scale is tuned toward the
/// target acceptance rate; both are frozen after warmup.
pub fn run_chain<F>(
    log_density: &F,
    init: &[f64],
    init_scale: &[f64],
    cfg: &RwmConfig,
    seed: u64,
) -> ChainOutput
where
    F: Fn(&[f64]) -> f64,
{
    let p = init.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = init.to_vec();
    let mut lp = log_density(&x);
    let mut chol = DMatrix::from_diagonal(&DVector::from_iterator(
        p,
        init_scale.iter().map(|s| s.abs().max(1e-12)),
    ));
    let mut log_scale = 0.0f64;
    let mut window: Vec<Vec<f64>> = Vec::new();
    let mut window_end = 100.min(cfg.warmup);
    let mut window_len = 100;
    let mut draws = Vec::with_capacity(cfg.iterations.saturating_sub(cfg.warmup));
    let mut accepted = 0usize;

    for it in 0..cfg.iterations {
        let z = DVector::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let step = &chol * z * log_scale.exp();
        let prop: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        let lp_prop = log_density(&prop);
        let log_alpha = if lp_prop.is_finite() { (lp_prop - lp).min(0.0) } else { f64::NEG_INFINITY };
        let u: f64 = rng.random();
        let accept = u.ln() < log_alpha;
        if accept {
            x = prop;
            lp = lp_prop;
        }
        if it < cfg.warmup {
            let rate = ((it + 1) as f64).powf(-0.6);
            log_scale += rate * (log_alpha.exp() - cfg.target_accept);
            log_scale = log_scale.clamp(-30.0, 10.0);
            window.push(x.clone());
            if it + 1 == window_end {
                if window.len() > 2 * p + 2 {
                    let mut cov = sample_cov(&window) * (2.38 * 2.38 / p as f64);
                    let jitter = 1e-10 * (1.0 + cov.diagonal().max());
                    for i in 0..p {
                        cov[(i, i)] += jitter;
                    }
                    if let Some(c) = cov.cholesky() {
                        chol = c.l();
                        log_scale = 0.0;
                    }
                }
                window.clear();
                window_len *= 2;
                window_end = if cfg.warmup - window_end < 2 * window_len {
                    cfg.warmup
                } else {
                    window_end + window_len
                };
            }
        } else {
            if accept {
                accepted += 1;
            }
            draws.push(x.clone());
        }
    }
    let kept = cfg.iterations.saturating_sub(cfg.warmup).max(1);
    ChainOutput {
        draws,
        accept_rate: accepted as f64 / kept as f64,
    }
}

/// Run `cfg.chains` chains with seeds drawn from `rng`.
pub fn run_chains<F, R>(
    log_density: &F,
    inits: &[Vec<f64>],
    init_scale: &[f64],
    cfg: &RwmConfig,
    rng: &mut R,
) -> Vec<ChainOutput>
where
    F: Fn(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    let seeds: Vec<u64> = (0..cfg.chains).map(|_| rng.random()).collect();
    seeds
        .iter()
        .enumerate()
        .map(|(c, &s)| run_chain(log_density, &inits[c % inits.len()], init_scale, cfg, s))
        .collect()
}
