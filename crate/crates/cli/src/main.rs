//! `qsl`: experiment runner. Each subcommand reads one JSON config (or a
//! manifest from an earlier run), writes CSV/JSON results into the output
//! directory, and records them in `manifest.json`.

mod commands;
mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::Serialize;

use qsl_core::QslError;

use crate::config::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(name = "qsl", version, about = "Quantum speed limit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config, or a manifest to re-run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Parallel sweep workers (default: available cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Adiabatic energies over a range of λ.
    Spectrum,
    /// Evolve under a field (loaded, guessed, or the sudden switch).
    Propagate,
    /// Krotov optimization at a single duration.
    Optimize,
    /// Bisect for the QSL time.
    QslScan,
    SweepEps0,
    SweepGap,
    SweepN,
    /// Baseline and spectrum of a field record.
    AnalyzeField,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Propagate => "propagate",
            Command::Optimize => "optimize",
            Command::QslScan => "qsl-scan",
            Command::SweepEps0 => "sweep-eps0",
            Command::SweepGap => "sweep-gap",
            Command::SweepN => "sweep-n",
            Command::AnalyzeField => "analyze-field",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            kind: "config",
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self {
            kind: "io",
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl From<QslError> for CliError {
    fn from(e: QslError) -> Self {
        let kind = match &e {
            QslError::InvalidParameter(_) => "invalid_parameter",
            QslError::DimensionMismatch { .. } => "dimension_mismatch",
            QslError::NonFiniteField { .. } => "non_finite_field",
            QslError::NonFiniteUpdate { .. } => "non_finite_update",
            QslError::BoundUndefined => "bound_undefined",
            QslError::GridTooCoarse { .. } => "grid_too_coarse",
            QslError::HistoryTooShort { .. } => "history_too_short",
            QslError::BracketInvalid(_) => "bracket_invalid",
            QslError::CriterionUnstable { .. } => "criterion_unstable",
            QslError::Io { .. } => "io",
            QslError::Parse { .. } => "parse",
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

/// Everything needed to re-run: `qsl <command> --config manifest.json`.
#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    command: &'static str,
    version: &'static str,
    config: &'a ExperimentConfig,
    started_unix: f64,
    finished_unix: f64,
    outputs: Vec<String>,
    durations: BTreeMap<String, f64>,
}

/// Output directory plus the bookkeeping a command reports back.
pub struct Run {
    pub out: PathBuf,
    pub base: PathBuf,
    pub workers: usize,
    pub verbose: bool,
    pub outputs: Vec<String>,
    pub durations: BTreeMap<String, f64>,
}

impl Run {
    /// Path of a new output file, recorded for the manifest.
    pub fn output(&mut self, name: &str) -> Result<PathBuf, CliError> {
        let path = self.out.join(name);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        self.outputs.push(name.to_string());
        Ok(path)
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let path = self.output(name)?;
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::config(e.to_string()))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    pub fn log(&self, msg: impl FnOnce() -> String) {
        if self.verbose {
            eprintln!("{}", msg());
        }
    }

    /// Resolves a config-relative input path.
    pub fn input(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::config("--config <path> is required"))?;
    let (cfg, base) = ExperimentConfig::load(path)?;
    cfg.validate()?;
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let workers = cli.workers.unwrap_or_else(|| {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    });
    if workers == 0 {
        return Err(CliError::config("--workers must be at least 1"));
    }
    let mut run = Run {
        out,
        base,
        workers,
        verbose: cli.verbose,
        outputs: Vec::new(),
        durations: BTreeMap::new(),
    };

    let started = unix_now();
    let clock = Instant::now();
    match cli.command {
        Command::Spectrum => commands::spectrum(&cfg, &mut run)?,
        Command::Propagate => commands::propagate(&cfg, &mut run)?,
        Command::Optimize => commands::optimize(&cfg, &mut run)?,
        Command::QslScan => commands::qsl_scan(&cfg, &mut run)?,
        Command::SweepEps0 => commands::sweep(&cfg, &mut run, "eps0")?,
        Command::SweepGap => commands::sweep(&cfg, &mut run, "delta_b")?,
        Command::SweepN => commands::sweep(&cfg, &mut run, "n")?,
        Command::AnalyzeField => commands::analyze_field(&cfg, &mut run)?,
    }
    run.durations
        .insert("total".into(), clock.elapsed().as_secs_f64());

    let manifest = RunManifest {
        command: cli.command.name(),
        version: env!("CARGO_PKG_VERSION"),
        config: &cfg,
        started_unix: started,
        finished_unix: unix_now(),
        outputs: run.outputs.clone(),
        durations: run.durations.clone(),
    };
    let path = run.out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::config(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    println!("{}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({"error": {"kind": e.kind, "message": e.message}});
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
