//! Experiment runner around the coupling and Harnack-verification library.
//!
//! A run takes one TOML configuration, optional dotted-path overrides, and
//! a command; it writes CSV tables and JSON-line reports plus a
//! `manifest.json` into the output directory, prints one pass/fail line per
//! verdict, and exits 0 only when every verdict holds (1 on a failed
//! verdict, 2 on configuration or runtime errors).
//!
//! Reproducibility contract: identical configuration and seed give
//! byte-identical outputs, for any worker count; the only varying field is
//! the wall time inside the manifest.

pub mod commands;
pub mod config;

use commands::CommandOutput;
use serde::Serialize;
use std::path::PathBuf;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unusable configuration; exit code 2.
    #[error("invalid config: {0}")]
    Config(String),
    /// A check came back false; exit code 1.
    #[error("verdict violation: {0}")]
    Verdict(String),
    /// I/O or numerical failure at run time; exit code 2.
    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl CliError {
    #[must_use]
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Verdict(_) => 1,
            Self::Config(_) | Self::Runtime(_) => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// The six experiment commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    SimulateLevy,
    Moments,
    Couple,
    VerifyHarnack,
    Gradient,
    RhoTable,
}

impl CommandKind {
    #[must_use]
    pub fn name(self) -> &'static str {
        match self {
            Self::SimulateLevy => "simulate-levy",
            Self::Moments => "moments",
            Self::Couple => "couple",
            Self::VerifyHarnack => "verify-harnack",
            Self::Gradient => "gradient",
            Self::RhoTable => "rho-table",
        }
    }
}

/// Invocation parameters from the command line.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config_path: PathBuf,
    /// `key.path=value` overrides, applied in order.
    pub overrides: Vec<String>,
    /// Worker threads; `None` uses every core.
    pub workers: Option<usize>,
    pub out_dir: PathBuf,
}

/// What `manifest.json` records about a run. Only `wall_time_s` may differ
/// between reruns of the same configuration.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub command: String,
    pub config_digest: String,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub verdicts: Vec<VerdictRecord>,
    pub wall_time_s: f64,
}

#[derive(Debug, Serialize)]
pub struct VerdictRecord {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

/// Loads the configuration, runs the command inside a dedicated worker
/// pool, persists outputs plus the manifest, and prints the verdict lines.
pub fn run(kind: CommandKind, opts: &RunOptions) -> CliResult<()> {
    let started = Instant::now();
    let (cfg, config_digest) = config::load(&opts.config_path, &opts.overrides)?;
    std::fs::create_dir_all(&opts.out_dir).map_err(|e| {
        CliError::Runtime(format!("cannot create {}: {e}", opts.out_dir.display()))
    })?;

    // A local pool (rather than the global one) keeps repeated in-process
    // runs with different worker counts honest.
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot build worker pool: {e}")))?;
    let output: CommandOutput = pool.install(|| commands::run_command(kind, &cfg, &opts.out_dir))?;

    let manifest = RunManifest {
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        command: kind.name().to_string(),
        config_digest,
        seed: cfg.seed,
        outputs: output
            .files
            .iter()
            .map(|p| {
                p.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| p.display().to_string())
            })
            .collect(),
        verdicts: output
            .verdicts
            .iter()
            .map(|v| VerdictRecord {
                name: v.name.clone(),
                holds: v.holds,
                detail: v.detail.clone(),
            })
            .collect(),
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    let manifest_path = opts.out_dir.join("manifest.json");
    let manifest_json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Runtime(format!("cannot serialise manifest: {e}")))?;
    std::fs::write(&manifest_path, manifest_json).map_err(|e| {
        CliError::Runtime(format!("cannot write {}: {e}", manifest_path.display()))
    })?;

    for v in &output.verdicts {
        let tag = if v.holds { "PASS" } else { "FAIL" };
        println!("[{tag}] {}: {}", v.name, v.detail);
    }
    println!("manifest: {}", manifest_path.display());

    let failing: Vec<&commands::Verdict> =
        output.verdicts.iter().filter(|v| !v.holds).collect();
    if failing.is_empty() {
        Ok(())
    } else {
        let mut parts = Vec::new();
        for v in &failing {
            match &v.report {
                Some(path) => parts.push(format!("{} (see {})", v.name, path.display())),
                None => parts.push(v.name.clone()),
            }
        }
        Err(CliError::Verdict(parts.join("; ")))
    }
}
