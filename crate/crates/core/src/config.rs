//! Run configuration: a flat `key=value` document with `#` comments.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::faso::{CostRatio, Detector};
use crate::family::FamilyKind;
use crate::optim::{OptimizerHyper, OptimizerKind};
use crate::rwm::RwmConfig;
use crate::target::GaussianStructure;
use crate::termination::{detector_from_name, RaabbviConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetKind {
    Gaussian(GaussianStructure),
    Logistic,
}

impl TargetKind {
    pub fn name(self) -> &'static str {
        match self {
            TargetKind::Gaussian(s) => s.name(),
            TargetKind::Logistic => "logistic",
        }
    }
}

impl FromStr for TargetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "logistic" {
            Ok(TargetKind::Logistic)
        } else {
            s.parse().map(TargetKind::Gaussian)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Raabbvi,
    Faso,
    FixedLrBaseline,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Raabbvi => "raabbvi",
            Algorithm::Faso => "faso",
            Algorithm::FixedLrBaseline => "fixed_lr_baseline",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raabbvi" => Ok(Algorithm::Raabbvi),
            "faso" => Ok(Algorithm::Faso),
            "fixed_lr_baseline" => Ok(Algorithm::FixedLrBaseline),
            other => Err(Error::InvalidArgument(format!("unknown algorithm `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub target: TargetKind,
    pub dim: usize,
    pub corr: f64,
    pub data: Option<PathBuf>,
    pub prior_scale: f64,
    pub family: FamilyKind,
    pub optimizer: OptimizerKind,
    pub algorithm: Algorithm,
    pub gamma0: f64,
    pub w_min: usize,
    pub xi: f64,
    pub tau: f64,
    /// `None` tracks `xi`.
    pub epsilon0: Option<f64>,
    pub rho: f64,
    pub mc_samples: usize,
    pub k0: usize,
    pub k_max: usize,
    pub seed: u64,
    pub baseline_gamma: f64,
    pub output: PathBuf,
    pub detector: String,
    pub cost_ratio: CostRatio,
    pub warm_start_rmsprop: bool,
    pub hyper: OptimizerHyper,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            target: TargetKind::Gaussian(GaussianStructure::Identity),
            dim: 10,
            corr: 0.8,
            data: None,
            prior_scale: 1.0,
            family: FamilyKind::MeanField,
            optimizer: OptimizerKind::AvgAdam,
            algorithm: Algorithm::Raabbvi,
            gamma0: 0.3,
            w_min: 200,
            xi: 0.1,
            tau: 1.0,
            epsilon0: None,
            rho: 0.5,
            mc_samples: 10,
            k0: 1000,
            k_max: 100_000,
            seed: 0,
            baseline_gamma: 0.1,
            output: PathBuf::from("bbvi_run"),
            detector: "rhat".into(),
            cost_ratio: CostRatio::OpCount,
            warm_start_rmsprop: false,
            hyper: OptimizerHyper::default(),
        }
    }
}

/// Every accepted key, in canonical order.
pub const KEYS: &[&str] = &[
    "target",
    "dim",
    "corr",
    "data",
    "prior_scale",
    "family",
    "optimizer",
    "algorithm",
    "gamma0",
    "w_min",
    "xi",
    "tau",
    "epsilon0",
    "rho",
    "mc_samples",
    "k0",
    "k_max",
    "seed",
    "baseline_gamma",
    "output",
    "detector",
    "cost_ratio",
    "warm_start_rmsprop",
    "beta1",
    "beta2",
    "rms_beta",
    "eps_num",
    "adagrad_window",
];

fn cfg_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| cfg_err(key, format!("cannot parse `{value}`: {e}")))
}

fn parse_cost_ratio(key: &str, value: &str) -> Result<CostRatio> {
    match value {
        "op_count" => Ok(CostRatio::OpCount),
        "wall_clock" => Ok(CostRatio::WallClock),
        v => {
            let r: f64 = parse_value(key, v)?;
            if !(r >= 0.0 && r.is_finite()) {
                return Err(cfg_err(key, "a fixed cost ratio must be finite and >= 0"));
            }
            Ok(CostRatio::Fixed(r))
        }
    }
}

fn cost_ratio_text(c: CostRatio) -> String {
    match c {
        CostRatio::OpCount => "op_count".into(),
        CostRatio::WallClock => "wall_clock".into(),
        CostRatio::Fixed(r) => r.to_string(),
    }
}

impl RunConfig {
    pub fn epsilon(&self) -> f64 {
        self.epsilon0.unwrap_or(self.xi)
    }

    /// Set one key from its textual value without validating the whole config.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "target" => self.target = v.parse().map_err(|e: Error| cfg_err(key, e.to_string()))?,
            "dim" => self.dim = parse_value(key, v)?,
            "corr" => self.corr = parse_value(key, v)?,
            "data" => self.data = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "prior_scale" => self.prior_scale = parse_value(key, v)?,
            "family" => self.family = v.parse().map_err(|e: Error| cfg_err(key, e.to_string()))?,
            "optimizer" => {
                self.optimizer = v.parse().map_err(|e: Error| cfg_err(key, e.to_string()))?
            }
            "algorithm" => {
                self.algorithm = v.parse().map_err(|e: Error| cfg_err(key, e.to_string()))?
            }
            "gamma0" => self.gamma0 = parse_value(key, v)?,
            "w_min" => self.w_min = parse_value(key, v)?,
            "xi" => self.xi = parse_value(key, v)?,
            "tau" => self.tau = parse_value(key, v)?,
            "epsilon0" => self.epsilon0 = Some(parse_value(key, v)?),
            "rho" => self.rho = parse_value(key, v)?,
            "mc_samples" => self.mc_samples = parse_value(key, v)?,
            "k0" => self.k0 = parse_value(key, v)?,
            "k_max" => self.k_max = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "baseline_gamma" => self.baseline_gamma = parse_value(key, v)?,
            "output" => self.output = PathBuf::from(v),
            "detector" => {
                detector_from_name(v).map_err(|e| cfg_err(key, e.to_string()))?;
                self.detector = v.to_string();
            }
            "cost_ratio" => self.cost_ratio = parse_cost_ratio(key, v)?,
            "warm_start_rmsprop" => self.warm_start_rmsprop = parse_value(key, v)?,
            "beta1" => self.hyper.beta1 = parse_value(key, v)?,
            "beta2" => self.hyper.beta2 = parse_value(key, v)?,
            "rms_beta" => self.hyper.rms_beta = parse_value(key, v)?,
            "eps_num" => self.hyper.eps_num = parse_value(key, v)?,
            "adagrad_window" => self.hyper.adagrad_window = parse_value(key, v)?,
            other => return Err(cfg_err(other, "unknown key")),
        }
        Ok(())
    }

    /// Check every invariant, naming the first offending key.
    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && !v.is_nan() {
                Ok(())
            } else {
                Err(cfg_err(key, format!("must be positive, got {v}")))
            }
        };
        if self.dim == 0 {
            return Err(cfg_err("dim", "must be a positive integer"));
        }
        if let TargetKind::Gaussian(s) = self.target {
            if !s.is_diagonal() && !(self.corr > 0.0 && self.corr < 1.0) {
                return Err(cfg_err("corr", "must lie in (0, 1)"));
            }
        }
        if self.target == TargetKind::Logistic && self.data.is_none() {
            return Err(cfg_err("data", "the logistic target needs a data file"));
        }
        positive("prior_scale", self.prior_scale)?;
        positive("gamma0", self.gamma0)?;
        if self.w_min < 8 {
            return Err(cfg_err("w_min", "must be at least 8"));
        }
        positive("xi", self.xi)?;
        positive("tau", self.tau)?;
        if let Some(e) = self.epsilon0 {
            positive("epsilon0", e)?;
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(cfg_err("rho", format!("must lie in (0, 1), got {}", self.rho)));
        }
        for (key, v) in [
            ("mc_samples", self.mc_samples),
            ("k0", self.k0),
            ("k_max", self.k_max),
        ] {
            if v == 0 {
                return Err(cfg_err(key, "must be a positive integer"));
            }
        }
        positive("baseline_gamma", self.baseline_gamma)?;
        if self.optimizer == OptimizerKind::Ngd && self.family != FamilyKind::MeanField {
            return Err(cfg_err("optimizer", "ngd requires the mean_field family"));
        }
        for (key, b) in [
            ("beta1", self.hyper.beta1),
            ("beta2", self.hyper.beta2),
            ("rms_beta", self.hyper.rms_beta),
        ] {
            if !(0.0..1.0).contains(&b) {
                return Err(cfg_err(key, "must lie in [0, 1)"));
            }
        }
        if !(self.hyper.eps_num >= 0.0 && self.hyper.eps_num.is_finite()) {
            return Err(cfg_err("eps_num", "must be finite and >= 0"));
        }
        if self.hyper.adagrad_window == 0 {
            return Err(cfg_err("adagrad_window", "must be a positive integer"));
        }
        Ok(())
    }

    /// Canonical text form: every key in [`KEYS`] order, `epsilon0` and
    /// `data` omitted when unset.
    pub fn to_canonical(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        put("target", self.target.name().into());
        put("dim", self.dim.to_string());
        put("corr", self.corr.to_string());
        if let Some(d) = &self.data {
            put("data", d.display().to_string());
        }
        put("prior_scale", self.prior_scale.to_string());
        put("family", self.family.name().into());
        put("optimizer", self.optimizer.name().into());
        put("algorithm", self.algorithm.name().into());
        put("gamma0", self.gamma0.to_string());
        put("w_min", self.w_min.to_string());
        put("xi", self.xi.to_string());
        put("tau", self.tau.to_string());
        if let Some(e) = self.epsilon0 {
            put("epsilon0", e.to_string());
        }
        put("rho", self.rho.to_string());
        put("mc_samples", self.mc_samples.to_string());
        put("k0", self.k0.to_string());
        put("k_max", self.k_max.to_string());
        put("seed", self.seed.to_string());
        put("baseline_gamma", self.baseline_gamma.to_string());
        put("output", self.output.display().to_string());
        put("detector", self.detector.clone());
        put("cost_ratio", cost_ratio_text(self.cost_ratio));
        put("warm_start_rmsprop", self.warm_start_rmsprop.to_string());
        put("beta1", self.hyper.beta1.to_string());
        put("beta2", self.hyper.beta2.to_string());
        put("rms_beta", self.hyper.rms_beta.to_string());
        put("eps_num", self.hyper.eps_num.to_string());
        put("adagrad_window", self.hyper.adagrad_window.to_string());
        out
    }

    pub fn detector(&self) -> Detector {
        detector_from_name(&self.detector).unwrap_or(Detector::Rhat)
    }

    pub fn raabbvi_config(&self) -> RaabbviConfig {
        RaabbviConfig {
            family: self.family,
            optimizer: self.optimizer,
            hyper: self.hyper,
            gamma0: self.gamma0,
            rho: self.rho,
            w_min: self.w_min,
            xi: self.xi,
            tau: self.tau,
            epsilon: self.epsilon(),
            mc_samples: self.mc_samples,
            k0: self.k0,
            k_max: self.k_max,
            detector: self.detector(),
            cost_ratio: self.cost_ratio,
            warm_start_rmsprop: self.warm_start_rmsprop,
            fixed_kappa: None,
            sampler: RwmConfig::default(),
        }
    }
}

/// Parse a configuration document. Missing keys take defaults, unknown or
/// repeated keys are rejected, and the result is validated.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut seen = std::collections::HashSet::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(cfg_err(
                line,
                format!("line {}: expected key=value", lineno + 1),
            ));
        };
        let key = key.trim();
        if !seen.insert(key.to_string()) {
            return Err(cfg_err(key, "key given more than once"));
        }
        cfg.set(key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}
