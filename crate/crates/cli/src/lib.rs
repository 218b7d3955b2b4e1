//! Command-line front end: flag parsing, configuration layering, and the
//! four subcommands (`analyze`, `simulate`, `optimize`, `validate`).
//!
//! Every command is a pure function of its flags, the optional config file
//! and the seed: reruns produce byte-identical standard output and data
//! files. Wall-clock timings go only into the manifest sidecar written next
//! to `--out` artifacts, never into the output itself.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod commands;
pub mod config;
pub mod manifest;

/// Exit code for failed validation checks.
pub const EXIT_CHECK_FAILED: i32 = 1;
/// Exit code for usage, domain, and i/o errors.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] crosslot_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Parser)]
#[command(
    name = "crosslot",
    version,
    about = "Random-access NOMA with cross-slot interference cancellation: \
             simulate, analyze, optimize"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the closed-form two-user sum rate at a point or over a grid
    Analyze(AnalyzeArgs),
    /// Run Monte Carlo experiments of the full protocol
    Simulate(SimulateArgs),
    /// Search the (p, rate) plane for the maximum sum rate
    Optimize(OptimizeArgs),
    /// Check the closed forms against independent estimates
    Validate(ValidateArgs),
}

/// System parameters shared by the commands. Unset flags fall back to the
/// config file, then (for the seed) the CROSSLOT_SEED environment variable,
/// then built-in defaults.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Config file of `key = value` lines (keys: users, snr_db, p, rate,
    /// n_slots, n_experiments, seed, scheme)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of users
    #[arg(long)]
    pub users: Option<usize>,
    /// Average received SNR in dB
    #[arg(long)]
    pub snr_db: Option<f64>,
    /// Per-slot transmission probability
    #[arg(long)]
    pub p: Option<f64>,
    /// Encoding rate in bit/s/Hz
    #[arg(long)]
    pub rate: Option<f64>,
    /// Slots per experiment
    #[arg(long)]
    pub slots: Option<u64>,
    /// Number of independent experiments
    #[arg(long)]
    pub experiments: Option<usize>,
    /// Master seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Recovery scheme: cross-slot or intra-only
    #[arg(long)]
    pub scheme: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Human-readable `key = value` lines
    Text,
    /// Comma-separated records with a header row
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Standard output form
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
    /// Also write the records as CSV to this file (with a manifest sidecar)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Grid bounds and refinement overrides for searches and surfaces.
#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub p_min: Option<f64>,
    #[arg(long)]
    pub p_max: Option<f64>,
    #[arg(long)]
    pub p_step: Option<f64>,
    #[arg(long)]
    pub rate_min: Option<f64>,
    #[arg(long)]
    pub rate_max: Option<f64>,
    #[arg(long)]
    pub rate_step: Option<f64>,
    /// Refinement passes around the incumbent
    #[arg(long)]
    pub refine_rounds: Option<usize>,
    /// Step shrink factor per refinement pass, in (0, 1)
    #[arg(long)]
    pub refine_shrink: Option<f64>,
}

impl GridArgs {
    /// Applies the overrides on top of a default grid.
    pub fn apply(&self, mut grid: crosslot_core::GridSpec) -> crosslot_core::GridSpec {
        if let Some(v) = self.p_min {
            grid.p_min = v;
        }
        if let Some(v) = self.p_max {
            grid.p_max = v;
        }
        if let Some(v) = self.p_step {
            grid.p_step = v;
        }
        if let Some(v) = self.rate_min {
            grid.r_min = v;
        }
        if let Some(v) = self.rate_max {
            grid.r_max = v;
        }
        if let Some(v) = self.rate_step {
            grid.r_step = v;
        }
        if let Some(v) = self.refine_rounds {
            grid.refinement_rounds = v;
        }
        if let Some(v) = self.refine_shrink {
            grid.refinement_shrink = v;
        }
        grid
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Use the closed-form objective (two users only)
    #[arg(long, conflicts_with = "simulated")]
    pub analytical: bool,
    /// Use the Monte Carlo objective
    #[arg(long)]
    pub simulated: bool,
    /// Write an operating-point lookup table to this file instead of
    /// running a single search (backend chosen per row)
    #[arg(long, conflicts_with_all = ["analytical", "simulated"])]
    pub table: Option<PathBuf>,
    /// User counts for the lookup table (default: --users)
    #[arg(long, value_delimiter = ',')]
    pub table_users: Vec<usize>,
    /// SNRs in dB for the lookup table (default: --snr-db)
    #[arg(long, value_delimiter = ',')]
    pub table_snr_db: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Monte Carlo samples per operating point
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: u64,
    /// Slots for the chain-versus-simulation check
    #[arg(long, default_value_t = 1_000_000)]
    pub slots: u64,
    /// Seed for every randomized check
    #[arg(long, default_value_t = 3)]
    pub seed: u64,
}

/// Parses the command line and runs it, returning the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are successful exits; real parse errors are usage
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Analyze(args) => commands::analyze::cmd(args),
        Command::Simulate(args) => commands::simulate::cmd(args),
        Command::Optimize(args) => commands::optimize::cmd(args),
        Command::Validate(args) => commands::validate::cmd(args),
    }
}

/// Writes a data artifact plus its manifest sidecar.
pub(crate) fn write_artifact(
    path: &std::path::Path,
    content: &str,
    manifest: &manifest::RunManifest,
) -> Result<(), CliError> {
    let to_io = |source: std::io::Error, p: &std::path::Path| CliError::Io {
        path: p.display().to_string(),
        source,
    };
    std::fs::write(path, content).map_err(|e| to_io(e, path))?;
    let sidecar = manifest::sidecar_path(path);
    let body = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(&sidecar, body).map_err(|e| to_io(e, &sidecar))?;
    Ok(())
}
