//! Experiment runner: builds the target, runs the configured algorithm and
//! writes a JSONL trace plus a one-row CSV summary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Algorithm, RunConfig, TargetKind};
use crate::error::{Error, Result};
use crate::faso::{
    run_faso, run_fixed_lr_baseline, BaselineConfig, CheckRecord, FasoConfig,
};
use crate::family::{FamilyKind, Gaussian};
use crate::gradient::ElboGradient;
use crate::target::{
    make_gaussian_target, GaussianTargetSpec, LogisticRegressionTarget, TargetModel,
};
use crate::termination::run_raabbvi;

pub const SCHEMA_VERSION: u32 = 1;

/// Exit status for a run that finished but did not meet its stopping rule.
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub seed: u64,
    pub terminal_step: usize,
    pub sqrt_skl: Option<f64>,
    pub rel_mean_error: Option<f64>,
    pub rel_sd_error: Option<f64>,
    pub success: bool,
    pub reason: String,
    pub wall_time: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub exit_code: i32,
    pub warning: Option<String>,
    pub summary: SummaryRow,
    pub final_params: Vec<f64>,
    pub jsonl_path: PathBuf,
    pub csv_path: PathBuf,
}

/// Reference quantities available for Gaussian targets.
pub struct GroundTruth {
    /// Best member of the variational family.
    pub optimum: Gaussian,
    pub target_mean: Vec<f64>,
    pub target_sd: Vec<f64>,
}

impl GroundTruth {
    /// `(sqrt SKL to the optimum, relative mean error, relative sd error)`.
    pub fn accuracy(&self, q: &Gaussian) -> Result<(f64, f64, f64)> {
        let skl = self.optimum.skl(q)?;
        let mu = q.mean();
        let sd = q.sd();
        let mut em = 0.0;
        let mut es = 0.0;
        for i in 0..mu.len() {
            em += ((self.target_mean[i] - mu[i]) / self.target_sd[i]).powi(2);
            es += (sd[i] / self.target_sd[i] - 1.0).powi(2);
        }
        Ok((skl.max(0.0).sqrt(), em.sqrt(), es.sqrt()))
    }
}

/// Build the configured target and, for Gaussian targets, its ground truth.
pub fn build_target(cfg: &RunConfig) -> Result<(Box<dyn TargetModel>, Option<GroundTruth>)> {
    match cfg.target {
        TargetKind::Gaussian(structure) => {
            let spec = GaussianTargetSpec::new(cfg.dim, structure).with_corr(cfg.corr);
            let target = make_gaussian_target(spec)?;
            let optimum = match cfg.family {
                FamilyKind::MeanField => Gaussian::MeanField(target.optimal_mf_approximation()),
                FamilyKind::FullRank => Gaussian::FullRank(target.as_full_rank()?),
            };
            let truth = GroundTruth {
                optimum,
                target_mean: target.mean(),
                target_sd: target.sd(),
            };
            Ok((Box::new(target), Some(truth)))
        }
        TargetKind::Logistic => {
            let path = cfg.data.as_ref().ok_or_else(|| Error::Config {
                key: "data".into(),
                message: "the logistic target needs a data file".into(),
            })?;
            let target = LogisticRegressionTarget::from_csv(path, cfg.prior_scale)?;
            Ok((Box::new(target), None))
        }
    }
}

fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

pub fn jsonl_path(cfg: &RunConfig) -> PathBuf {
    with_suffix(&cfg.output, "jsonl")
}

pub fn csv_path(cfg: &RunConfig) -> PathBuf {
    with_suffix(&cfg.output, "csv")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn check_line(c: &CheckRecord) -> Result<Value> {
    let mut v = serde_json::to_value(c).map_err(|e| Error::Io(e.to_string()))?;
    v["type"] = json!("check");
    Ok(v)
}

fn accuracy_fields(truth: Option<&GroundTruth>, family: FamilyKind, params: &[f64]) -> Result<Value> {
    let Some(truth) = truth else {
        return Ok(json!({"sqrt_skl": null, "rel_mean_error": null, "rel_sd_error": null}));
    };
    let q = Gaussian::from_flat(family, params)?;
    let (s, m, e) = truth.accuracy(&q)?;
    Ok(json!({"sqrt_skl": s, "rel_mean_error": m, "rel_sd_error": e}))
}

/// In-memory result of one algorithm run.
#[derive(Clone, Debug)]
pub struct RunTrace {
    /// Trace records in step order, without header or final line.
    pub lines: Vec<Value>,
    pub final_params: Vec<f64>,
    pub terminal_step: usize,
    pub success: bool,
    pub reason: String,
    pub warning: Option<String>,
}

fn run_raabbvi_trace(
    cfg: &RunConfig,
    target: &dyn TargetModel,
    rng: &mut ChaCha8Rng,
) -> Result<RunTrace> {
    let res = run_raabbvi(&cfg.raabbvi_config(), target, None, rng)?;
    // Tag every line with the global step it belongs to, then merge.
    let mut tagged: Vec<(u64, u8, Value)> = Vec::new();
    for c in &res.checks {
        tagged.push((c.step, 0, check_line(c)?));
    }
    let mut end = 0u64;
    for e in &res.decision_trace {
        end += e.k_t as u64;
        let mut v = serde_json::to_value(e).map_err(|e| Error::Io(e.to_string()))?;
        v["type"] = json!("epoch");
        v["step"] = json!(end);
        tagged.push((end, 1, v));
    }
    tagged.sort_by_key(|(s, k, _)| (*s, *k));
    let success = res.terminated_reason.is_success();
    Ok(RunTrace {
        lines: tagged.into_iter().map(|(_, _, v)| v).collect(),
        final_params: res.final_params,
        terminal_step: res.total_iterations,
        success,
        reason: res.terminated_reason.label().into(),
        warning: res.terminated_reason.warning(),
    })
}

fn run_faso_trace(
    cfg: &RunConfig,
    target: &dyn TargetModel,
    rng: &mut ChaCha8Rng,
) -> Result<RunTrace> {
    let rc = cfg.raabbvi_config();
    let fcfg: FasoConfig = rc.faso_config(cfg.gamma0, cfg.k_max, cfg.optimizer);
    let mut grad = ElboGradient::new(target, cfg.family, cfg.mc_samples)?;
    let init = Gaussian::standard(cfg.family, target.dim()).to_flat();
    let res = run_faso(&mut grad, &init, &fcfg, rng, 0)?;
    let lines = res.checks.iter().map(check_line).collect::<Result<Vec<_>>>()?;
    let (reason, warning) = match (&res.failure, res.success) {
        (Some(f), _) => (
            "error".to_string(),
            Some(format!("Warning: step {}: {}", f.step, f.message)),
        ),
        (None, true) => ("converged".to_string(), None),
        (None, false) => (
            "failed_to_converge".to_string(),
            Some(match &res.final_gate {
                Some(g) => format!(
                    "Warning: failed to converge. Estimated error is {}",
                    g.mean_relative_mcse
                ),
                None => "Warning: failed to converge. Estimated error is unknown".into(),
            }),
        ),
    };
    Ok(RunTrace {
        lines,
        final_params: res.iterate_average,
        terminal_step: res.iterations_used,
        success: res.success,
        reason,
        warning,
    })
}

fn run_baseline_trace(
    cfg: &RunConfig,
    target: &dyn TargetModel,
    truth: Option<&GroundTruth>,
    rng: &mut ChaCha8Rng,
) -> Result<RunTrace> {
    let mut bcfg = BaselineConfig::new(cfg.baseline_gamma, cfg.optimizer, cfg.family, cfg.k_max);
    bcfg.hyper = cfg.hyper;
    let mut grad = ElboGradient::new(target, cfg.family, cfg.mc_samples)?;
    let init = Gaussian::standard(cfg.family, target.dim()).to_flat();
    let res = run_fixed_lr_baseline(&mut grad, &init, &bcfg, rng)?;
    let mut lines = Vec::with_capacity(res.points.len());
    for p in &res.points {
        let mut v = accuracy_fields(truth, cfg.family, &p.average)?;
        v["type"] = json!("baseline");
        v["step"] = json!(p.step);
        v["window"] = json!(p.window);
        lines.push(v);
    }
    let (terminal_step, final_params) = match res.points.last() {
        Some(p) => (p.step, p.average.clone()),
        None => (0, res.final_iterate.clone()),
    };
    let (success, reason, warning) = match &res.failure {
        Some(f) => (
            false,
            "error".to_string(),
            Some(format!("Warning: step {}: {}", f.step, f.message)),
        ),
        None => (true, "completed".to_string(), None),
    };
    Ok(RunTrace {
        lines,
        final_params,
        terminal_step,
        success,
        reason,
        warning,
    })
}

/// Run the configured algorithm on `target` with a generator seeded from
/// `cfg.seed`, keeping everything in memory.
pub fn execute(
    cfg: &RunConfig,
    target: &dyn TargetModel,
    truth: Option<&GroundTruth>,
) -> Result<RunTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    match cfg.algorithm {
        Algorithm::Raabbvi => run_raabbvi_trace(cfg, target, &mut rng),
        Algorithm::Faso => run_faso_trace(cfg, target, &mut rng),
        Algorithm::FixedLrBaseline => run_baseline_trace(cfg, target, truth, &mut rng),
    }
}

/// Run one experiment and write `<output>.jsonl` and `<output>.csv`.
///
/// The JSONL stream holds a `{"schema":1}` header, check, epoch or baseline
/// records ordered by step, and a final record. Wall time appears only in
/// the CSV so that the trace is reproducible byte for byte.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let started = Instant::now();
    let (target, truth) = build_target(cfg)?;
    let run = execute(cfg, target.as_ref(), truth.as_ref())?;
    let wall_time = started.elapsed().as_secs_f64();

    let acc = accuracy_fields(truth.as_ref(), cfg.family, &run.final_params)?;
    let mut fin = acc.clone();
    fin["type"] = json!("final");
    fin["algorithm"] = json!(cfg.algorithm.name());
    fin["seed"] = json!(cfg.seed);
    fin["terminal_step"] = json!(run.terminal_step);
    fin["success"] = json!(run.success);
    fin["reason"] = json!(run.reason);
    fin["params"] = json!(run.final_params);

    let jsonl = jsonl_path(cfg);
    write_jsonl(&jsonl, run.lines.iter().chain(std::iter::once(&fin)))?;

    let summary = SummaryRow {
        algorithm: cfg.algorithm.name().into(),
        seed: cfg.seed,
        terminal_step: run.terminal_step,
        sqrt_skl: acc["sqrt_skl"].as_f64(),
        rel_mean_error: acc["rel_mean_error"].as_f64(),
        rel_sd_error: acc["rel_sd_error"].as_f64(),
        success: run.success,
        reason: run.reason,
        wall_time,
    };
    let csv = csv_path(cfg);
    write_summary(&csv, &summary)?;

    Ok(ExperimentOutcome {
        exit_code: if run.success { 0 } else { EXIT_NOT_CONVERGED },
        warning: run.warning,
        summary,
        final_params: run.final_params,
        jsonl_path: jsonl,
        csv_path: csv,
    })
}

fn write_jsonl<'a>(path: &Path, records: impl Iterator<Item = &'a Value>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let header = json!({ "schema": SCHEMA_VERSION });
    writeln!(w, "{header}").map_err(|e| io_err(path, e))?;
    for r in records {
        writeln!(w, "{r}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_summary(path: &Path, row: &SummaryRow) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.serialize(row).map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}
