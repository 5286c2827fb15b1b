//! `dagnet`: generate topologies, run agent networks, sweep scales and fit
//! scaling curves.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid arguments, configuration
//! or topology, 3 backend unavailable.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "dagnet", version, about = "Critic/actor agent networks on directed acyclic graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a topology, write it out and print its metrics.
    Topo(TopoArgs),
    /// Execute one run.
    Run(RunArgs),
    /// Run a scale sweep and fit the scaling curve per kind.
    Sweep(SweepArgs),
    /// Fit the scaling curve to a CSV with `n` and `quality` columns.
    Fit(FitArgs),
    /// Print the sink-context token counts with and without memory control.
    Tokens(TokensArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Dot,
}

#[derive(Args)]
struct TopoArgs {
    #[arg(long)]
    kind: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Destination file; the topology goes to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long)]
    reverse: bool,
    /// Join several sinks into one fresh sink node.
    #[arg(long)]
    append_sink: bool,
}

/// Settings shared by `run` and `sweep`; each overrides the config file.
#[derive(Args, Default)]
struct RunFlags {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<u32>,
    /// Carry the full upstream dialogue into every prompt.
    #[arg(long)]
    no_memory_control: bool,
    /// Run every leg to its full round budget.
    #[arg(long)]
    ignore_approval: bool,
    #[arg(long)]
    workers: Option<usize>,
    /// left-fold or balanced
    #[arg(long)]
    aggregation: Option<String>,
    #[arg(long)]
    domain: Option<String>,
    /// JSON list of agent profiles.
    #[arg(long)]
    library: Option<PathBuf>,
    #[arg(long, conflicts_with = "live")]
    mock: bool,
    #[arg(long)]
    live: bool,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Name of the environment variable holding the API key.
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long)]
    max_retries: Option<u32>,
    #[arg(long)]
    requests_per_minute: Option<u32>,
    #[arg(long)]
    mock_reply_tokens: Option<u32>,
    #[arg(long)]
    mock_approval_rate: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    flags: RunFlags,
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// Custom topology (.json or .dot) instead of a generated one.
    #[arg(long)]
    topology: Option<PathBuf>,
    #[arg(long)]
    reverse: bool,
    #[arg(long, default_value = "dagnet-out")]
    out_dir: PathBuf,
    /// Print the final artifact to stdout.
    #[arg(long)]
    print: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    flags: RunFlags,
    /// Comma-separated topology kinds.
    #[arg(long, value_delimiter = ',', default_value = "chain,mesh")]
    kinds: Vec<String>,
    /// Comma-separated node counts.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64")]
    scales: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    replicates: usize,
    /// length or refinement
    #[arg(long, default_value = "refinement")]
    quality: String,
    /// Concurrent runs.
    #[arg(long, default_value_t = 1)]
    sweep_workers: usize,
    #[arg(long, default_value = "dagnet-sweep")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    points: PathBuf,
    /// Only rows of this kind, when the CSV has a `kind` column.
    #[arg(long)]
    kind: Option<String>,
}

#[derive(Args)]
struct TokensArgs {
    #[arg(long)]
    n: u64,
    #[arg(long, default_value_t = 3)]
    m: u64,
    #[arg(long)]
    t: u64,
    #[arg(long)]
    p: u64,
    #[arg(long)]
    i: u64,
    #[arg(long)]
    s: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Topo(args) => commands::topo(args),
        Command::Run(args) => commands::run(args),
        Command::Sweep(args) => commands::sweep(args),
        Command::Fit(args) => commands::fit(args),
        Command::Tokens(args) => commands::tokens(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}
