//! Command-line driver: config loading, subcommand dispatch, artifacts and
//! run manifests.
//!
//! Exit codes: 0 on success, 2 for usage and validation errors, 3 when a
//! numerical routine fails or a requested tolerance is not met, 1 for I/O
//! failures.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use config::RunConfig;
use output::{ArtifactRecord, Artifacts};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("{0}")]
    Core(#[from] kamlab_core::Error),
    /// A run finished but missed a configured tolerance.
    #[error("check failed: {0}")]
    Check(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Check(_) => 3,
            CliError::Io(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "kamlab", version, about = "Control costs, weak KAM potentials and discrete transport")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory for artifacts and the manifest.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Build the cost matrix of a system on a grid.
    Cost,
    /// Critical value by Karp, stationary transport and subadditive bounds.
    Critical,
    /// Weak KAM potential as a min-plus eigenvector.
    Potential,
    /// Optimal transport plan, duals and the optimal stationary plan.
    Transport,
    /// Phase portrait, lower bounds and cost demo for the two-dimensional example.
    Example,
    /// Bracket expansions of Chow controls.
    Brackets,
    /// Structural hypotheses on the system and Lagrangian.
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Cost => "cost",
            Command::Critical => "critical",
            Command::Potential => "potential",
            Command::Transport => "transport",
            Command::Example => "example",
            Command::Brackets => "brackets",
            Command::Check => "check",
        }
    }
}

pub const DEFAULT_OUT: &str = "kamlab-out";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    core_version: &'static str,
    subcommand: &'static str,
    config_hash: String,
    config: &'a RunConfig,
    seed: u64,
    threads: usize,
    wall_time_seconds: f64,
    status: &'static str,
    exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    artifacts: &'a [ArtifactRecord],
}

/// Config after flags and defaults; everything a run needs.
pub struct Resolved {
    pub config: RunConfig,
    pub seed: u64,
    pub out: PathBuf,
    /// Directory relative paths in the config resolve against.
    pub base: PathBuf,
}

fn resolve(cli: &Cli, env: &[(String, String)]) -> Result<Resolved, CliError> {
    let (mut cfg, base) = match &cli.config {
        Some(p) => (
            config::load_config(p, env)?,
            p.parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        None => (config::parse_config("", env)?, PathBuf::from(".")),
    };
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.display().to_string());
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    config::validate(&cfg)?;
    let seed = cfg
        .seed
        .ok_or_else(|| CliError::Validation("seed is mandatory: set `seed` in the config or pass --seed".into()))?;
    let out = PathBuf::from(cfg.out.clone().unwrap_or_else(|| DEFAULT_OUT.into()));
    Ok(Resolved {
        config: cfg,
        seed,
        out,
        base,
    })
}

/// SHA-256 of the canonical config text without `out` and `threads`, which
/// do not change any artifact.
pub fn config_hash(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.out = None;
    c.threads = None;
    output::sha256_hex(config::to_toml(&c).as_bytes())
}

/// Runs one invocation with the process environment; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let env: Vec<(String, String)> = std::env::vars().collect();
    run_with_env(args, &env)
}

pub fn run_with_env<I, T>(args: I, env: &[(String, String)]) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let resolved = match resolve(&cli, env) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("kamlab: {e}");
            return e.exit_code();
        }
    };
    let start = Instant::now();
    let mut artifacts = match Artifacts::create(&resolved.out) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("kamlab: {e}");
            return e.exit_code();
        }
    };
    let pool = match resolved.config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            eprintln!("kamlab: cannot start thread pool: {e}");
            return 1;
        }
    };
    let threads = pool.current_num_threads();
    let outcome = pool.install(|| commands::dispatch(cli.command, &resolved, &mut artifacts));
    let (status, code, error) = match &outcome {
        Ok(()) => ("ok", 0, None),
        Err(e) => ("error", e.exit_code(), Some(e.to_string())),
    };
    let manifest = Manifest {
        tool: "kamlab",
        version: env!("CARGO_PKG_VERSION"),
        core_version: kamlab_core::VERSION,
        subcommand: cli.command.name(),
        config_hash: config_hash(&resolved.config),
        config: &resolved.config,
        seed: resolved.seed,
        threads,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        status,
        exit_code: code,
        error,
        artifacts: &artifacts.records,
    };
    let bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    let path = artifacts.dir().join(MANIFEST);
    if let Err(e) = std::fs::write(&path, [bytes.as_slice(), b"\n"].concat()) {
        eprintln!("kamlab: cannot write {}: {e}", path.display());
        return 1;
    }
    if let Err(e) = outcome {
        eprintln!("kamlab: {e}");
    }
    code
}
