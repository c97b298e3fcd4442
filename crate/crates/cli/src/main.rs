//! `lograph`: synthetic data generation, decomposition, coherence graphs and
//! the benchmark, each writing a manifest that can be replayed with `rerun`.

mod commands;
mod manifest;
mod svg;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Solver(String),
    #[error("every method failed")]
    AllFailed,
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Solver(_) => 4,
            CliError::AllFailed => 5,
        }
    }
}

impl From<lograph::Error> for CliError {
    fn from(e: lograph::Error) -> Self {
        use lograph::Error as E;
        match e {
            E::Io { .. } | E::Parse { .. } => CliError::Io(e.to_string()),
            E::NonFinite(_) | E::Numerical(_) => CliError::Solver(e.to_string()),
            E::Dimension(_) | E::InvalidEntry { .. } | E::InvalidParameter(_) | E::ZeroEnergy => {
                CliError::Usage(e.to_string())
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "lograph", version, about = "Joint low-rank recovery and graph refinement")]
struct Cli {
    /// Log solver progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic graph-smooth, corrupted instance.
    Synth(commands::SynthArgs),
    /// Decompose a data matrix into low-rank and sparse parts.
    Decompose(commands::DecomposeArgs),
    /// Build a coherence connectivity graph from multichannel time series.
    Coherence(commands::CoherenceArgs),
    /// Compare methods over seeded synthetic instances.
    Benchmark(commands::BenchmarkArgs),
    /// Replay a previous run from its manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
struct RerunArgs {
    /// Path to a manifest.json.
    #[arg(long)]
    manifest: std::path::PathBuf,
    /// Output location for the replay (defaults to the original one).
    #[arg(long)]
    out: Option<String>,
}

/// Runs one invocation; `args` excludes the program name.
fn run(args: Vec<String>) -> Result<(), CliError> {
    let cli = match Cli::try_parse_from(std::iter::once("lograph".to_string()).chain(args.iter().cloned())) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return Ok(());
        }
        Err(e) => {
            let text = e.render().to_string();
            let text = text.strip_prefix("error: ").unwrap_or(&text);
            return Err(CliError::Usage(text.trim_end().to_string()));
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();

    match cli.command {
        Command::Synth(a) => commands::synth(&a, &args),
        Command::Decompose(a) => commands::decompose(&a, &args),
        Command::Coherence(a) => commands::coherence(&a, &args),
        Command::Benchmark(a) => commands::benchmark(&a, &args),
        Command::Rerun(a) => {
            let m = manifest::RunManifest::read(&a.manifest)?;
            let replay = match &a.out {
                Some(out) => m.args_with_out(out),
                None => m.args.clone(),
            };
            if replay.first().map(String::as_str) == Some("rerun") {
                return Err(CliError::Usage("manifest records a rerun; refusing to recurse".into()));
            }
            run(replay)
        }
    }
}

fn main() -> ExitCode {
    match run(std::env::args().skip(1).collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
