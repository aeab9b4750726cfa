use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};

use clap::{Parser, Subcommand};

use bbvi::config::{parse_config, RunConfig};
use bbvi::harness::run_experiment;
use bbvi::Result;

#[derive(Parser, Debug)]
#[command(name = "bbvi", version, about = "Black-box variational inference experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run one experiment from a key=value config file.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output prefix; `.jsonl` and `.csv` are appended.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override a config key, `key=value`. Repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run every `*.cfg` file in a directory, one process per config.
    Batch {
        dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; each run writes `<dir>/<config stem>.{jsonl,csv}`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn load(path: &Path, seed: Option<u64>, out: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| bbvi::Error::Io(format!("{}: {e}", path.display())))?;
    let mut cfg = parse_config(&text)?;
    for o in overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| bbvi::Error::Config {
            key: o.clone(),
            message: "override must be key=value".into(),
        })?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.output = o.to_path_buf();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_one(path: &Path, seed: Option<u64>, out: Option<&Path>, overrides: &[String]) -> ExitCode {
    let cfg = match load(path, seed, out, overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match run_experiment(&cfg) {
        Ok(o) => {
            if let Some(w) = &o.warning {
                eprintln!("{w}");
            }
            println!(
                "{} terminal_step={} success={} -> {}",
                o.summary.algorithm,
                o.summary.terminal_step,
                o.summary.success,
                o.jsonl_path.display()
            );
            ExitCode::from(o.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn batch(dir: &Path, jobs: usize, seed: Option<u64>, out: Option<&Path>, overrides: &[String]) -> ExitCode {
    let mut configs: Vec<PathBuf> = match std::fs::read_dir(dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "cfg"))
            .collect(),
        Err(e) => {
            eprintln!("error: {}: {e}", dir.display());
            return ExitCode::from(1);
        }
    };
    configs.sort();
    let exe = match std::env::current_exe() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let mut worst = 0u8;
    for chunk in configs.chunks(jobs.max(1)) {
        let mut children = Vec::new();
        for cfg in chunk {
            let mut cmd = Command::new(&exe);
            cmd.arg("run").arg(cfg);
            if let Some(s) = seed {
                cmd.arg("--seed").arg(s.to_string());
            }
            if let Some(o) = out {
                let stem = cfg.file_stem().unwrap_or_default();
                cmd.arg("--out").arg(o.join(stem));
            }
            for ov in overrides {
                cmd.arg("--override").arg(ov);
            }
            match cmd.spawn() {
                Ok(c) => children.push((cfg.clone(), c)),
                Err(e) => {
                    eprintln!("error: {}: {e}", cfg.display());
                    worst = 3;
                }
            }
        }
        for (cfg, mut c) in children {
            let code = match c.wait() {
                Ok(s) => s.code().unwrap_or(1),
                Err(_) => 1,
            };
            if code != 0 {
                eprintln!("{}: exit {code}", cfg.display());
            }
            // Errors outrank non-convergence.
            let rank = match code {
                0 => 0,
                2 => 2,
                _ => 3,
            };
            worst = worst.max(rank);
        }
    }
    ExitCode::from(if worst == 3 { 1 } else { worst })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Cmd::Run {
            config,
            seed,
            out,
            overrides,
        } => run_one(&config, seed, out.as_deref(), &overrides),
        Cmd::Batch {
            dir,
            jobs,
            seed,
            out,
            overrides,
        } => batch(&dir, jobs, seed, out.as_deref(), &overrides),
    }
}
