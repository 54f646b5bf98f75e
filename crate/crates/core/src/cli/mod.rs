//! The `entroprod` command line: experiment runner and config validator.

pub mod config;
pub mod experiments;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use serde::Serialize;

use crate::bounds::BoundsCertificate;
use crate::diffusion::cart_domains;
use crate::error::Error;
use config::{resolve, suggest, ConfigError, Experiment, ExperimentConfig};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CERTIFICATE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Predicted working sets above this are reported by `validate`.
pub const MEMORY_CAP_BYTES: usize = 4 << 30;

#[derive(Debug, Parser)]
#[command(name = "entroprod", version, about = "Entropy production experiments with bound certificates")]
#[command(after_help = EXPERIMENT_HELP)]
pub struct Args {
    /// Experiment id, or `validate` followed by an experiment id.
    pub experiment: String,
    /// Experiment checked by `validate`.
    pub target: Option<String>,
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one parameter, as key=value or experiment.key=value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Output directory; defaults to out/<experiment>.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

const EXPERIMENT_HELP: &str = "Experiments: brownian, circle, so3, cart, compressible, couette, oscillator, \
conundrum, bounds-report, debruijn.\nENTROPROD_THREADS caps the worker threads.\n\
Exit codes: 0 pass, 1 certificate failure, 2 config error, 3 numerical failure.";

#[derive(Debug, Serialize)]
struct Summary<'a> {
    experiment: &'a str,
    seed: u64,
    pass: bool,
    threads: usize,
    wall_clock_seconds: f64,
    rows: usize,
    failed: Vec<&'a str>,
    certificates: &'a [BoundsCertificate],
    scalars: &'a BTreeMap<String, f64>,
}

/// Runs the command line and returns the process exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    let threads = match configure_threads() {
        Ok(n) => n,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_CONFIG;
        }
    };
    if args.experiment == "validate" {
        return validate(&args);
    }
    let (cfg, errors) = match load(&args, &args.experiment) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if !errors.is_empty() {
        for e in &errors {
            eprintln!("error: {e}");
        }
        return EXIT_CONFIG;
    }
    run(&cfg, threads)
}

/// Applies `ENTROPROD_THREADS` to the global pool and reports the thread count.
fn configure_threads() -> Result<usize, String> {
    let Ok(raw) = std::env::var("ENTROPROD_THREADS") else {
        return Ok(rayon::current_num_threads());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("ENTROPROD_THREADS must be a positive integer, got `{raw}`"))?;
    // A pool built earlier in the same process is kept.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(rayon::current_num_threads())
}

fn load(args: &Args, id: &str) -> Result<(ExperimentConfig, Vec<ConfigError>), ConfigError> {
    let experiment = Experiment::from_id(id).map_err(|e| match e {
        ConfigError::UnknownExperiment { id, suggestion: None } => {
            let suggestion = suggest(&id, std::iter::once("validate"));
            ConfigError::UnknownExperiment { id, suggestion }
        }
        e => e,
    })?;
    let text = match &args.config {
        Some(path) => Some(fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?),
        None => None,
    };
    let (mut cfg, errors) = resolve(experiment, text.as_deref(), &args.sets, args.seed);
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    Ok((cfg, errors))
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter(_) | Error::InvalidDomain(_) | Error::StabilityViolation { .. } => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

/// Runs one experiment and writes its outputs.
pub fn run(cfg: &ExperimentConfig, threads: usize) -> i32 {
    let out = cfg.out.clone().unwrap_or_else(|| Path::new("out").join(cfg.experiment.id()));
    let start = Instant::now();
    let result = experiments::run(cfg);
    let elapsed = start.elapsed().as_secs_f64();
    let output = match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {} failed: {e}", cfg.experiment);
            return exit_code(&e);
        }
    };
    let report = &output.report;
    let failed: Vec<&str> = report.failures().map(|c| c.id.as_str()).collect();
    let pass = failed.is_empty();
    let summary = Summary {
        experiment: cfg.experiment.id(),
        seed: cfg.seed,
        pass,
        threads,
        wall_clock_seconds: elapsed,
        rows: report.rows.len(),
        failed: failed.clone(),
        certificates: &report.certificates,
        scalars: &output.scalars,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    let written = fs::create_dir_all(&out).and_then(|_| {
        fs::write(out.join("series.csv"), report.to_csv())?;
        fs::write(out.join("summary.json"), json + "\n")?;
        fs::write(out.join("config.echo"), cfg.echo())
    });
    if let Err(e) = written {
        eprintln!("error: cannot write {}: {e}", out.display());
        return EXIT_NUMERICAL;
    }
    println!(
        "{}: {} ({} certificates, {} rows, {elapsed:.2} s) -> {}",
        cfg.experiment,
        if pass { "PASS" } else { "FAIL" },
        report.certificates.len(),
        report.rows.len(),
        out.display()
    );
    for id in &failed {
        println!("  failed: {id}");
    }
    if pass {
        EXIT_PASS
    } else {
        EXIT_CERTIFICATE
    }
}

/// Findings of `validate` for one config.
#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub diagnostics: Vec<String>,
    pub memory_bytes: usize,
}

/// Checks a resolved config for predicted stability violations and
/// oversized working sets without running it.
pub fn predict(cfg: &ExperimentConfig) -> Validation {
    let mut diagnostics = Vec::new();
    let (grid_cells, dim) = experiments::grid_extent(cfg);
    let particles = match cfg.experiment {
        Experiment::Compressible | Experiment::Cart => cfg.usize("particles"),
        _ => 0,
    };
    // RK4 stages, clipping scratch and cached drift and diffusion per cell.
    let per_cell = 8 + dim + dim * dim;
    let memory_bytes = grid_cells.saturating_mul(per_cell * 8).saturating_add(particles.saturating_mul(dim * 16));
    if memory_bytes > MEMORY_CAP_BYTES {
        diagnostics.push(format!(
            "estimated memory {:.1} GiB exceeds the {:.0} GiB cap",
            memory_bytes as f64 / (1u64 << 30) as f64,
            MEMORY_CAP_BYTES as f64 / (1u64 << 30) as f64
        ));
        return Validation { diagnostics, memory_bytes };
    }
    if let Some(problem) = experiments::fpe_problem(cfg) {
        match problem {
            Ok(p) => {
                let dt = if cfg.params.contains_key("dt") { cfg.f64("dt") } else { 0.0 };
                let safety = if cfg.params.contains_key("safety") { cfg.f64("safety") } else { 0.9 };
                if dt > 0.0 {
                    if let Err(e) = p.check_stability(dt) {
                        diagnostics.push(format!("predicted instability: {e}"));
                    }
                }
                if safety > 1.0 && dt == 0.0 {
                    let (diff, adv) = p.stability_bounds();
                    diagnostics.push(format!(
                        "predicted instability: safety {safety} exceeds 1 (bounds {diff:e}, {adv:e})"
                    ));
                }
            }
            Err(e) => diagnostics.push(format!("cannot build the problem: {e}")),
        }
    }
    if cfg.experiment == Experiment::Cart {
        let (p, o) = experiments::cart_setup(cfg);
        if o.safety > 1.0 {
            diagnostics.push(format!("predicted instability: safety {} exceeds 1", o.safety));
        }
        if let Err(e) = cart_domains(&p, &o) {
            diagnostics.push(format!("cannot size the grid: {e}"));
        }
    }
    Validation { diagnostics, memory_bytes }
}

fn validate(args: &Args) -> i32 {
    let Some(target) = &args.target else {
        eprintln!("error: usage: entroprod validate <experiment> [--config FILE] [--set key=value ...]");
        return EXIT_CONFIG;
    };
    let (cfg, errors) = match load(args, target) {
        Ok(v) => v,
        Err(e) => {
            println!("{e}");
            return EXIT_CONFIG;
        }
    };
    let mut lines: Vec<String> = errors.iter().map(ToString::to_string).collect();
    let mut memory = None;
    if errors.is_empty() {
        let v = predict(&cfg);
        lines.extend(v.diagnostics);
        memory = Some(v.memory_bytes);
    }
    for l in &lines {
        println!("{l}");
    }
    if let Some(m) = memory {
        println!("info: estimated memory {:.1} MiB", m as f64 / (1u64 << 20) as f64);
    }
    println!("{}: {} diagnostic(s)", cfg.experiment, lines.len());
    if lines.is_empty() {
        EXIT_PASS
    } else {
        EXIT_CONFIG
    }
}
